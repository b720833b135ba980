/* tslint:disable */
/* eslint-disable */

/**
 * A model trained in the page plus its held-out utterances.
 */
export class DemoSession {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Posteriors, alignment and word timings of one held-out utterance.
     */
    align(index: number, gamma_inf: number, offset_ms: number): string;
    /**
     * Trains a model on a freshly generated synthetic corpus.
     */
    constructor(settings: string);
    num_utterances(): number;
    /**
     * Metrics over the held-out split at one threshold.
     */
    score(gamma_inf: number, offset_ms: number, threshold_ms: number): string;
    /**
     * Configuration and per-epoch log as JSON.
     */
    summary(): string;
}

/**
 * JSON wrapper around [`ramps`].
 */
export function cetc_ramps(request: string): string;

/**
 * Default settings shown in the page, as a JSON object.
 */
export function default_settings(): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demosession_free: (a: number, b: number) => void;
    readonly cetc_ramps: (a: number, b: number) => [number, number, number, number];
    readonly default_settings: () => [number, number];
    readonly demosession_align: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demosession_new: (a: number, b: number) => [number, number, number];
    readonly demosession_num_utterances: (a: number) => number;
    readonly demosession_score: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demosession_summary: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
