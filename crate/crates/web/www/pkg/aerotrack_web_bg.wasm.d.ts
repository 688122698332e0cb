/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_fit: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_frame: (a: number, b: bigint) => [number, number, number, number];
export const demo_frameCount: (a: number) => bigint;
export const demo_new: (a: bigint) => [number, number, number];
export const demo_track: (a: number, b: bigint) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
