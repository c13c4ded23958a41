/* tslint:disable */
/* eslint-disable */

/**
 * pass@k for k = 1, 2, 4, ... up to n, given c correct of n samples.
 */
export function pass_at_k_curve(n: number, c: number): string;

/**
 * Simplifies or diversifies a chain such as `mod 10: 2 +3 *2 = ?`.
 * An empty string draws a random problem from `seed`.
 */
export function restructure(text: string, kind: string, seed: number): string;

/**
 * Trains CLPO and GRPO side by side and returns their curriculum ratios.
 */
export function simulate_curriculum(seed: number, steps: number, batch_size: number, lr: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly pass_at_k_curve: (a: number, b: number) => [number, number];
    readonly restructure: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly simulate_curriculum: (a: number, b: number, c: number, d: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
