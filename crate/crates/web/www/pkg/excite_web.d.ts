/* tslint:disable */
/* eslint-disable */

/**
 * Normalized first-order indices along the trajectory from both engines.
 */
export class IndexComparison {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    iota_c(): Float64Array;
    iota_d(): Float64Array;
    su_c(): Float64Array;
    su_d(): Float64Array;
    times(): Float64Array;
}

/**
 * Sensitivity trajectories of the spring-damper displacement.
 */
export class Trajectories {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    impact_c(): number;
    impact_d(): number;
    mean(): Float64Array;
    s_c(): Float64Array;
    s_d(): Float64Array;
    s_min(): Float64Array;
    times(): Float64Array;
}

/**
 * Sobol indices from the degree-3 surrogate next to the transport estimate
 * from `n_samples` model runs.
 */
export function compare_engines(u0: number, f: number, phase: number, n_samples: number, seed: bigint): IndexComparison;

/**
 * Design objective `J` of a sinusoid for the two weightings: sensitivity to
 * the spring constant only, and to the damping only. Returns `[J_c, J_d]`.
 */
export function sinusoid_objective(u0: number, f: number, phase: number, meas_std: number): Float64Array;

/**
 * First-order sensitivities from the Galerkin surrogate for the input
 * `u0 sin(2 pi f t - phase)`.
 */
export function surrogate_sensitivity(u0: number, f: number, phase: number, degree: number, meas_std: number): Trajectories;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_indexcomparison_free: (a: number, b: number) => void;
    readonly __wbg_trajectories_free: (a: number, b: number) => void;
    readonly compare_engines: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
    readonly indexcomparison_iota_c: (a: number) => [number, number];
    readonly indexcomparison_iota_d: (a: number) => [number, number];
    readonly indexcomparison_su_c: (a: number) => [number, number];
    readonly indexcomparison_su_d: (a: number) => [number, number];
    readonly indexcomparison_times: (a: number) => [number, number];
    readonly sinusoid_objective: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly surrogate_sensitivity: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly trajectories_impact_c: (a: number) => number;
    readonly trajectories_impact_d: (a: number) => number;
    readonly trajectories_mean: (a: number) => [number, number];
    readonly trajectories_s_c: (a: number) => [number, number];
    readonly trajectories_s_d: (a: number) => [number, number];
    readonly trajectories_s_min: (a: number) => [number, number];
    readonly trajectories_times: (a: number) => [number, number];
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
