/* tslint:disable */
/* eslint-disable */

/**
 * Models built once per page load.
 */
export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Builds the poker, tool and hex key at `voxel_size` metres.
     */
    constructor(voxel_size: number);
    runCpf(seed: number, n_clp: number, n_cs: number): string;
    runScope(seed: number, n_opp: number, n_os: number, mask: string): string;
    sdfSlice(object: string, depth: number): string;
    /**
     * Number of surface points of an object, or 0 for an unknown name.
     */
    surfaceCount(object: string): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_new: (a: number) => [number, number, number];
    readonly demo_runCpf: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_runScope: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly demo_sdfSlice: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_surfaceCount: (a: number, b: number, c: number) => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
