/**
 * Viewer session: connects to a render service, tracks ViewerState, and
 * keeps the displayed frame in sync through the latest-wins fetcher.
 * Presentation is injected so tests can capture exactly what is shown.
 */

import { FetchLike, FrameFetcher, FrameResult, ServiceMeta, fetchMeta } from './api.js';
import {
    ViewerState,
    clampState,
    defaultState,
    orbit,
    pan,
    tickPlayback,
    zoom,
} from './state.js';

export interface Presenter {
    show(frame: FrameResult): void;
    showError(message: string): void;
}

export class Session {
    state: ViewerState = defaultState();
    meta: ServiceMeta | null = null;
    lastShown: FrameResult | null = null;
    private fetcher: FrameFetcher;

    constructor(
        private baseUrl: string,
        private fetchFn: FetchLike,
        private presenter: Presenter,
        private width = 256,
        private height = 256,
    ) {
        this.fetcher = new FrameFetcher(baseUrl, fetchFn, (frame) => {
            this.lastShown = frame;
            presenter.show(frame);
        }, (err) => presenter.showError(err.message));
    }

    async connect(): Promise<ServiceMeta> {
        const meta = await fetchMeta(this.baseUrl, this.fetchFn);
        this.meta = meta;
        this.state = clampState({
            ...this.state,
            center: [...meta.suggested_orbit_center] as [number, number, number],
            radius: Math.max(meta.scene_extent * 1.5, 0.5),
        });
        this.refresh();
        return meta;
    }

    setViewport(width: number, height: number): void {
        this.width = width;
        this.height = height;
    }

    get requestCount(): number {
        return this.fetcher.requestCount;
    }

    get maxObservedInFlight(): number {
        return this.fetcher.maxObservedInFlight;
    }

    refresh(): void {
        this.fetcher.request(this.state, this.width, this.height);
    }

    dragOrbit(dxPixels: number, dyPixels: number): void {
        this.state = orbit(this.state, -dxPixels * 0.01, dyPixels * 0.01);
        this.refresh();
    }

    dragPan(dxPixels: number, dyPixels: number): void {
        this.state = pan(this.state, dxPixels, dyPixels, this.height);
        this.refresh();
    }

    wheelZoom(deltaY: number): void {
        this.state = zoom(this.state, Math.exp(deltaY * 0.001));
        this.refresh();
    }

    scrubTime(t: number): void {
        this.state = clampState({ ...this.state, time: t });
        this.refresh();
    }

    togglePlay(): void {
        this.state = { ...this.state, playing: !this.state.playing };
    }

    /** Advance playback by dt seconds (called on the UI's animation timer). */
    tick(dtSeconds: number): void {
        if (!this.state.playing) {
            return;
        }
        this.state = tickPlayback(this.state, dtSeconds);
        this.refresh();
    }
}
