/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_indexcomparison_free: (a: number, b: number) => void;
export const __wbg_trajectories_free: (a: number, b: number) => void;
export const compare_engines: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
export const indexcomparison_iota_c: (a: number) => [number, number];
export const indexcomparison_iota_d: (a: number) => [number, number];
export const indexcomparison_su_c: (a: number) => [number, number];
export const indexcomparison_su_d: (a: number) => [number, number];
export const indexcomparison_times: (a: number) => [number, number];
export const sinusoid_objective: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const surrogate_sensitivity: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
export const trajectories_impact_c: (a: number) => number;
export const trajectories_impact_d: (a: number) => number;
export const trajectories_mean: (a: number) => [number, number];
export const trajectories_s_c: (a: number) => [number, number];
export const trajectories_s_d: (a: number) => [number, number];
export const trajectories_s_min: (a: number) => [number, number];
export const trajectories_times: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
