import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "node",
    include: ["tests/**/*.test.ts"],
    // live tests spawn real services; run files one at a time
    fileParallelism: false,
    testTimeout: 30000,
    hookTimeout: 180000,
  },
});
