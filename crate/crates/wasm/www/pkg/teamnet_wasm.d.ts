/* tslint:disable */
/* eslint-disable */

/**
 * A synthetic dataset and an MT-TReNN trained on it.
 */
export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Edge deletions that push expected teamwork past the other teams'
     * upper (or lower) quartile.
     */
    counterfactual(index: number, budget: number, increase: boolean): string;
    /**
     * Snapshot edges, EL labels and predictions for one team.
     */
    graph(index: number): string;
    constructor(seed: number, strength: number, epochs: number);
    /**
     * Binned member × step saliency of the expected teamwork score.
     */
    saliency(index: number, bins: number): string;
    teamCount(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_counterfactual: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_graph: (a: number, b: number) => [number, number, number, number];
    readonly demo_new: (a: number, b: number, c: number) => [number, number, number];
    readonly demo_saliency: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_teamCount: (a: number) => number;
    readonly __externref_table_alloc: () => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
