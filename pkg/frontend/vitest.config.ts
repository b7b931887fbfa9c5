import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["test/**/*.test.ts", "e2e/**/*.test.ts"],
    // the e2e spec waits out real presentation phases against a live server
    testTimeout: 180_000,
    hookTimeout: 60_000,
  },
});
