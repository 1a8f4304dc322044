/* tslint:disable */
/* eslint-disable */

/**
 * A short annealed run on rows sampled from a 2x2 table.
 */
export class SyntheticTrainer {
    free(): void;
    [Symbol.dispose](): void;
    current_step(): bigint;
    finished(): boolean;
    constructor(p_positive: Float64Array, rows: number, annealing_steps: bigint, seed: bigint);
    /**
     * Runs up to `steps` updates. Returns the points evaluated meanwhile as
     * rows of `[step, beta, kl_a_bits, kl_b_bits, val_cross_entropy]`.
     */
    step_chunk(steps: number): Float64Array;
    total_steps(): bigint;
    /**
     * Current overlap between the two values of feature `index`.
     */
    value_overlap(index: number): number;
}

/**
 * `[H(Y), H(Y|A,B), I(A,B;Y), I(A;Y), I(B;Y)]` in bits for uniform binary
 * inputs and `P(y=1 | a, b)` given in row-major order.
 */
export function exact_information(p_positive: Float64Array): Float64Array;

/**
 * Pairwise Bhattacharyya coefficients for `n` Gaussians in `dim`
 * dimensions. `means` and `log_vars` are row-major `n x dim`; the result is
 * row-major `n x n`.
 */
export function overlap_matrix(means: Float64Array, log_vars: Float64Array, dim: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_synthetictrainer_free: (a: number, b: number) => void;
    readonly exact_information: (a: number, b: number) => [number, number, number, number];
    readonly overlap_matrix: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly synthetictrainer_current_step: (a: number) => bigint;
    readonly synthetictrainer_finished: (a: number) => number;
    readonly synthetictrainer_new: (a: number, b: number, c: number, d: bigint, e: bigint) => [number, number, number];
    readonly synthetictrainer_step_chunk: (a: number, b: number) => [number, number, number, number];
    readonly synthetictrainer_total_steps: (a: number) => bigint;
    readonly synthetictrainer_value_overlap: (a: number, b: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
