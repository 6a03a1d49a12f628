/* tslint:disable */
/* eslint-disable */

/**
 * One rendered scene with cost volumes over one and over all measurements.
 */
export class Session {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Estimated inverse depth at a pixel, NaN where invalid.
     */
    estimate_inverse(x: number, y: number): number;
    /**
     * Estimated depth as RGBA bytes, inverse depth mapped to brightness.
     */
    estimate_rgba(): Uint8Array;
    height(): number;
    inverse_depths(): Float64Array;
    /**
     * Mean absolute inverse-depth error of the estimate.
     */
    l1_inv(): number;
    /**
     * Cost curve at a pixel from every measurement; NaN where unobserved.
     */
    multi_curve(x: number, y: number): Float64Array;
    /**
     * `measurements` in 1..=4 frames are used for the multi-frame volume.
     */
    constructor(kind: string, width: number, height: number, baseline: number, measurements: number, n_depth: number, seed: bigint);
    /**
     * Reference image as RGBA bytes.
     */
    reference_rgba(): Uint8Array;
    /**
     * Cost curve at a pixel from the first measurement only; NaN where unobserved.
     */
    single_curve(x: number, y: number): Float64Array;
    /**
     * Ground-truth inverse depth at a pixel, NaN where the ray hits nothing.
     */
    truth_inverse(x: number, y: number): number;
    /**
     * Ground-truth depth as RGBA bytes on the same scale as the estimate.
     */
    truth_rgba(): Uint8Array;
    width(): number;
}

/**
 * Inverse depths of the hypothesis planes, nearest last.
 */
export function inverse_depth_samples(d_min: number, d_max: number, n: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_session_free: (a: number, b: number) => void;
    readonly inverse_depth_samples: (a: number, b: number, c: number) => [number, number, number, number];
    readonly session_estimate_inverse: (a: number, b: number, c: number) => number;
    readonly session_estimate_rgba: (a: number) => [number, number];
    readonly session_height: (a: number) => number;
    readonly session_inverse_depths: (a: number) => [number, number];
    readonly session_l1_inv: (a: number) => [number, number, number];
    readonly session_multi_curve: (a: number, b: number, c: number) => [number, number];
    readonly session_new: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: bigint) => [number, number, number];
    readonly session_reference_rgba: (a: number) => [number, number];
    readonly session_single_curve: (a: number, b: number, c: number) => [number, number];
    readonly session_truth_inverse: (a: number, b: number, c: number) => number;
    readonly session_truth_rgba: (a: number) => [number, number];
    readonly session_width: (a: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
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
