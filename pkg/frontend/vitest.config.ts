// Plain object (no vitest import) so the globally installed vitest can load
// this config without a local vitest package in node_modules.
export default {
  test: {
    environment: 'jsdom',
    include: ['tests/**/*.test.ts'],
    testTimeout: 60_000,
    hookTimeout: 60_000,
  },
};
