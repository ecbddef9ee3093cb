import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    include: ['test/**/*.test.ts'],
    // Scan acceptance tests drive a full scanner run; the budget mirrors
    // the five-minute wall-clock criterion.
    testTimeout: 300_000,
    hookTimeout: 60_000,
    // The scan tests mutate fixture state through real bursts; keep files
    // sequential so servers never share a process's event loop timing.
    fileParallelism: false,
  },
});
