// Reconnect backoff: doubles from 500 ms, capped at 8 s, resets on success.

export const BACKOFF_BASE_MS = 500;
export const BACKOFF_CAP_MS = 8000;

export function backoffDelayMs(attempt: number): number {
  if (attempt <= 0) return BACKOFF_BASE_MS;
  return Math.min(BACKOFF_CAP_MS, BACKOFF_BASE_MS * Math.pow(2, attempt));
}
