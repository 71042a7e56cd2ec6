/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    basis(vertex: number, index: number): Float64Array;
    kleTerms(): number;
    nVertices(): number;
    constructor(fine_n: number, coarse_n: number);
    nodesPerSide(): number;
    /**
     * Samples a permeability field and returns its nodal values.
     */
    sample(seed: number): Float64Array;
    solution(which: number): Float64Array;
    /**
     * Runs the steady solves; returns `[offline L2, online L2, offline H1,
     * online H1, fine iterations, offline iterations]`.
     */
    solve(nb: number): Float64Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_basis: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_kleTerms: (a: number) => number;
    readonly demo_nVertices: (a: number) => number;
    readonly demo_new: (a: number, b: number) => [number, number, number];
    readonly demo_nodesPerSide: (a: number) => number;
    readonly demo_sample: (a: number, b: number) => [number, number, number, number];
    readonly demo_solution: (a: number, b: number) => [number, number, number, number];
    readonly demo_solve: (a: number, b: number) => [number, number, number, number];
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
