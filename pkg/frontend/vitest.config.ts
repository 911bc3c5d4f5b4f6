import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    testTimeout: 300_000,
    hookTimeout: 60_000,
    // one test file at a time: the overhead benchmark must not share
    // cores with other engine processes
    pool: "forks",
    fileParallelism: false,
    maxConcurrency: 1,
  },
});
