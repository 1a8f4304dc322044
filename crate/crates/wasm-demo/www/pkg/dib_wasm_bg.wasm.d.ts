/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_synthetictrainer_free: (a: number, b: number) => void;
export const exact_information: (a: number, b: number) => [number, number, number, number];
export const overlap_matrix: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const synthetictrainer_current_step: (a: number) => bigint;
export const synthetictrainer_finished: (a: number) => number;
export const synthetictrainer_new: (a: number, b: number, c: number, d: bigint, e: bigint) => [number, number, number];
export const synthetictrainer_step_chunk: (a: number, b: number) => [number, number, number, number];
export const synthetictrainer_total_steps: (a: number) => bigint;
export const synthetictrainer_value_overlap: (a: number, b: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
