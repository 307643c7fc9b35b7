import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    testTimeout: 20000,
    hookTimeout: 30000,
    // the e2e spec owns a fixture gateway process; keep files sequential
    fileParallelism: false,
  },
});
