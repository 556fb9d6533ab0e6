/**
 * Render-service client: /meta discovery and a latest-wins frame fetcher.
 *
 * The fetcher keeps at most one request in flight. State changes during a
 * request overwrite the pending slot; when the active request settles, only
 * the newest pending state is issued. Stale responses are discarded.
 */

import { ViewerState, stateToPose } from './state.js';

export interface ServiceMeta {
    resolution: { width: number; height: number };
    time_range: [number, number];
    scene_extent: number;
    suggested_orbit_center: [number, number, number];
    gaussian_counts: { deformable: number; static: number };
}

export type FetchLike = (url: string) => Promise<{
    ok: boolean;
    status: number;
    arrayBuffer(): Promise<ArrayBuffer>;
    json(): Promise<unknown>;
}>;

export async function fetchMeta(baseUrl: string, fetchFn: FetchLike): Promise<ServiceMeta> {
    const res = await fetchFn(`${baseUrl}/meta`);
    if (!res.ok) {
        throw new Error(`/meta failed with status ${res.status}`);
    }
    return (await res.json()) as ServiceMeta;
}

export function renderUrl(baseUrl: string, state: ViewerState,
                          width: number, height: number): string {
    const pose = stateToPose(state).map((x) => String(x)).join(',');
    return `${baseUrl}/render?pose=${pose}&t=${state.time}&w=${width}&h=${height}`;
}

export interface FrameResult {
    bytes: ArrayBuffer;
    state: ViewerState;
    url: string;
}

/** Latest-wins single-flight frame loader. */
export class FrameFetcher {
    private inFlight = false;
    private pending: { state: ViewerState; width: number; height: number } | null = null;
    requestCount = 0;
    maxObservedInFlight = 0;
    private activeCount = 0;

    constructor(
        private baseUrl: string,
        private fetchFn: FetchLike,
        private onFrame: (frame: FrameResult) => void,
        private onError: (err: Error) => void,
    ) { }

    /** Ask for a frame at this state; may supersede a queued request. */
    request(state: ViewerState, width: number, height: number): void {
        this.pending = { state, width, height };
        if (!this.inFlight) {
            void this.pump();
        }
    }

    get busy(): boolean {
        return this.inFlight;
    }

    private async pump(): Promise<void> {
        while (this.pending) {
            const { state, width, height } = this.pending;
            this.pending = null;
            this.inFlight = true;
            this.activeCount += 1;
            this.maxObservedInFlight = Math.max(this.maxObservedInFlight, this.activeCount);
            const url = renderUrl(this.baseUrl, state, width, height);
            this.requestCount += 1;
            try {
                const res = await this.fetchFn(url);
                if (!res.ok) {
                    throw new Error(`render failed with status ${res.status}`);
                }
                const bytes = await res.arrayBuffer();
                // a newer request may be queued; the frame is still the
                // latest COMPLETED one, so present it unless superseded
                if (!this.pending) {
                    this.onFrame({ bytes, state, url });
                }
            } catch (err) {
                this.onError(err instanceof Error ? err : new Error(String(err)));
            } finally {
                this.activeCount -= 1;
                this.inFlight = false;
            }
        }
    }
}
