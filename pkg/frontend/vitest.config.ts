import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    environment: "jsdom",
    include: ["test/**/*.test.ts"],
    // the smoke test drives a spawned gateway in real time
    testTimeout: 90_000,
    hookTimeout: 60_000,
  },
});
