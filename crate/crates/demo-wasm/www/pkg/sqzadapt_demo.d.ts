/* tslint:disable */
/* eslint-disable */

/**
 * Posterior trajectory of one simulated run.
 */
export class Trace {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Per-measurement lossless coherent bound.
     */
    coherent(): number;
    /**
     * LO angle of each batch, in acquisition order.
     */
    lo_angles(): Float64Array;
    phase(): Float64Array;
    phase_sd(): Float64Array;
    /**
     * Per-measurement squeezed QCRB; divide by the sample count.
     */
    qcrb(): number;
    /**
     * Sample counts at which the posterior was read out.
     */
    samples(): Float64Array;
}

/**
 * Fine LO angle that decouples phase and squeezing errors.
 */
export function decorrelationAngle(phi: number, r: number, eta: number): number;

export function fineAngleScan(phi: number, r: number, eta: number, points: number): Float64Array;

export function noiseCurve(r: number, eta: number, points: number): Float64Array;

export function simulate(multi: boolean, phi: number, r: number, eta: number, total: number, seed: number): Trace;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_trace_free: (a: number, b: number) => void;
    readonly decorrelationAngle: (a: number, b: number, c: number) => number;
    readonly fineAngleScan: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly noiseCurve: (a: number, b: number, c: number) => [number, number, number, number];
    readonly simulate: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly trace_coherent: (a: number) => number;
    readonly trace_lo_angles: (a: number) => [number, number];
    readonly trace_phase: (a: number) => [number, number];
    readonly trace_phase_sd: (a: number) => [number, number];
    readonly trace_qcrb: (a: number) => number;
    readonly trace_samples: (a: number) => [number, number];
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
