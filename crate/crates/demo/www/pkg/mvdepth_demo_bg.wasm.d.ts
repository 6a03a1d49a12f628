/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_session_free: (a: number, b: number) => void;
export const inverse_depth_samples: (a: number, b: number, c: number) => [number, number, number, number];
export const session_estimate_inverse: (a: number, b: number, c: number) => number;
export const session_estimate_rgba: (a: number) => [number, number];
export const session_height: (a: number) => number;
export const session_inverse_depths: (a: number) => [number, number];
export const session_l1_inv: (a: number) => [number, number, number];
export const session_multi_curve: (a: number, b: number, c: number) => [number, number];
export const session_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: bigint) => [number, number, number];
export const session_reference_rgba: (a: number) => [number, number];
export const session_single_curve: (a: number, b: number, c: number) => [number, number];
export const session_truth_inverse: (a: number, b: number, c: number) => number;
export const session_truth_rgba: (a: number) => [number, number];
export const session_width: (a: number) => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;
