/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_diffusionrun_free: (a: number, b: number) => void;
export const blob_frames: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
export const diffusionrun_edges: (a: number) => [number, number];
export const diffusionrun_n_nodes: (a: number) => number;
export const diffusionrun_new: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
export const diffusionrun_values: (a: number) => [number, number];
export const gaussian_tc: (a: number, b: number, c: bigint) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
