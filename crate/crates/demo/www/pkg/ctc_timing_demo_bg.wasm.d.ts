/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demosession_free: (a: number, b: number) => void;
export const cetc_ramps: (a: number, b: number) => [number, number, number, number];
export const default_settings: () => [number, number];
export const demosession_align: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demosession_new: (a: number, b: number) => [number, number, number];
export const demosession_num_utterances: (a: number) => number;
export const demosession_score: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demosession_summary: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
