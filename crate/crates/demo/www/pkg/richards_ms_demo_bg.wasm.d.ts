/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_basis: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_kleTerms: (a: number) => number;
export const demo_nVertices: (a: number) => number;
export const demo_new: (a: number, b: number) => [number, number, number];
export const demo_nodesPerSide: (a: number) => number;
export const demo_sample: (a: number, b: number) => [number, number, number, number];
export const demo_solution: (a: number, b: number) => [number, number, number, number];
export const demo_solve: (a: number, b: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
