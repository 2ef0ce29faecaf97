/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_trace_free: (a: number, b: number) => void;
export const decorrelationAngle: (a: number, b: number, c: number) => number;
export const fineAngleScan: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const noiseCurve: (a: number, b: number, c: number) => [number, number, number, number];
export const simulate: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
export const trace_coherent: (a: number) => number;
export const trace_lo_angles: (a: number) => [number, number];
export const trace_phase: (a: number) => [number, number];
export const trace_phase_sd: (a: number) => [number, number];
export const trace_qcrb: (a: number) => number;
export const trace_samples: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
