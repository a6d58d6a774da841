/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const docker_default_profile: () => [number, number];
export const generate_profile_json: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const hello_world_trace: () => [number, number];
export const mine_trace: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const simulate: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
