/* tslint:disable */
/* eslint-disable */

/**
 * Cell energy of the bending ansatz for F = diag(1 − δ, 1) under the dist²
 * laminate with soft phase α, next to the quadratic prediction qδ².
 * Returns [ansatz energy, qδ², minimal det].
 */
export function bending_energy(delta: number, k: number, alpha: number, res: number): Float64Array;

/**
 * Squared distance of [[a, b], [c, d]] to SO(2) and the angle of its polar rotation.
 */
export function distance_to_rotations(a: number, b: number, c: number, d: number): Float64Array;

/**
 * Homogenized stiffness at e₁⊗e₁ of the stiff/soft laminate for each soft-phase
 * stiffness in `alphas`.
 */
export function laminate_curve(alphas: Float64Array, res: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly bending_energy: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly distance_to_rotations: (a: number, b: number, c: number, d: number) => [number, number];
    readonly laminate_curve: (a: number, b: number, c: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
