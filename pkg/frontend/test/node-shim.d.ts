// Minimal ambient declarations for the node builtins the tests touch, so
// compiling them needs no installed type packages. Assertion helpers return
// void (no control-flow narrowing) to keep call sites unconstrained.

declare module "node:test" {
  type TestFn = (t?: unknown) => void | Promise<void>;
  export function test(name: string, fn: TestFn): void;
}

declare module "node:assert/strict" {
  interface Assert {
    ok(value: unknown, message?: string): void;
    equal(actual: unknown, expected: unknown, message?: string): void;
    notEqual(actual: unknown, expected: unknown, message?: string): void;
    deepEqual(actual: unknown, expected: unknown, message?: string): void;
  }
  const assert: Assert;
  export default assert;
}

declare module "node:fs" {
  export function readFileSync(path: string | URL, encoding: string): string;
}

declare const process: { cwd(): string };
