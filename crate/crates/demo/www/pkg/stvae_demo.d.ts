/* tslint:disable */
/* eslint-disable */

/**
 * Mass spreading from one node of a random connected graph.
 */
export class DiffusionRun {
    free(): void;
    [Symbol.dispose](): void;
    constructor(n_nodes: number, degree: number, alpha: number, steps: number, seed: bigint);
    /**
     * Undirected edges as consecutive `(i, j)` pairs.
     */
    readonly edges: Uint32Array;
    readonly n_nodes: number;
    /**
     * Node values per step, `[steps + 1, n_nodes]` row-major.
     */
    readonly values: Float64Array;
}

/**
 * `t_len` frames of a blob starting at the grid centre, concatenated row-major.
 */
export function blob_frames(size: number, t_len: number, vx: number, vy: number, amplitude: number, blob_width: number): Float32Array;

/**
 * `[estimate, closed form]` of the total correlation of a bivariate
 * Gaussian with correlation `rho`, from a bank of posteriors whose
 * aggregate approximates it.
 */
export function gaussian_tc(rho: number, samples: number, seed: bigint): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_diffusionrun_free: (a: number, b: number) => void;
    readonly blob_frames: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly diffusionrun_edges: (a: number) => [number, number];
    readonly diffusionrun_n_nodes: (a: number) => number;
    readonly diffusionrun_new: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
    readonly diffusionrun_values: (a: number) => [number, number];
    readonly gaussian_tc: (a: number, b: number, c: bigint) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_table_dealloc: (a: number) => void;
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
