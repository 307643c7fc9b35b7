// Frame display ordering: the gateway's frame ids are monotone per client,
// and anything out of order arrived late and must not overwrite a newer
// image.

import type { BinaryFrame } from "./protocol.js";

export class FrameSequencer {
  private lastShown = 0;
  dropped = 0;

  /** True when the frame is newer than anything displayed so far. */
  accept(frame: BinaryFrame): boolean {
    if (frame.frameId <= this.lastShown) {
      this.dropped += 1;
      return false;
    }
    this.lastShown = frame.frameId;
    return true;
  }

  get lastFrameId(): number {
    return this.lastShown;
  }
}

/** Paint a PNG frame onto a canvas (browser only). */
export async function drawFrame(
  canvas: HTMLCanvasElement,
  frame: BinaryFrame,
): Promise<void> {
  const blob = new Blob([frame.png.slice().buffer], { type: "image/png" });
  const bitmap = await createImageBitmap(blob);
  canvas.width = frame.width;
  canvas.height = frame.height;
  const ctx = canvas.getContext("2d");
  if (ctx) {
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    ctx.drawImage(bitmap, 0, 0);
  }
  bitmap.close();
}
