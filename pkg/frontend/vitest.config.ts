import { defineConfig } from 'vitest/config';

export default defineConfig({
  test: {
    environment: 'jsdom',
    // The flow test boots the trained demo service once; give setup room.
    hookTimeout: 240_000,
    testTimeout: 60_000,
  },
});
