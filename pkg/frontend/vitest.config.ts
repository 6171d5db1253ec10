import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts"],
    // round-trip tests spawn the python engine once per probe
    testTimeout: 120_000,
    hookTimeout: 120_000,
  },
});
