import { describe, expect, it } from 'vitest';

import { FetchLike, FrameResult } from '../src/api.js';
import { Session } from '../src/session.js';

interface Seen {
    url: string;
    resolve: () => void;
}

/**
 * Fake render service implementing the documented API: /meta returns the
 * discovery payload; /render echoes its own URL as the body so tests can
 * match responses to requests byte-for-byte. Responses can be held open to
 * exercise the latest-wins path.
 */
function fakeService(opts: { holdRenders?: boolean } = {}) {
    const pending: Seen[] = [];
    const urls: string[] = [];
    let inFlight = 0;
    let maxInFlight = 0;

    const fetchFn: FetchLike = (url: string) => {
        urls.push(url);
        if (url.endsWith('/meta')) {
            return Promise.resolve({
                ok: true, status: 200,
                arrayBuffer: () => Promise.reject(new Error('not bytes')),
                json: () => Promise.resolve({
                    resolution: { width: 64, height: 64 },
                    time_range: [0, 1],
                    scene_extent: 3.0,
                    suggested_orbit_center: [0.1, 0.2, 0.3],
                    gaussian_counts: { deformable: 10, static: 4 },
                }),
            });
        }
        inFlight += 1;
        maxInFlight = Math.max(maxInFlight, inFlight);
        const body = new TextEncoder().encode(url).buffer;
        return new Promise((resolve) => {
            const finish = () => {
                inFlight -= 1;
                resolve({
                    ok: true, status: 200,
                    arrayBuffer: () => Promise.resolve(body),
                    json: () => Promise.reject(new Error('not json')),
                });
            };
            if (opts.holdRenders) {
                pending.push({ url, resolve: finish });
            } else {
                finish();
            }
        });
    };
    return {
        fetchFn, urls, pending,
        get maxInFlight() { return maxInFlight; },
        releaseAll() {
            while (pending.length) {
                pending.shift()!.resolve();
            }
        },
    };
}

function collector() {
    const frames: FrameResult[] = [];
    const errors: string[] = [];
    return {
        frames, errors,
        presenter: {
            show: (f: FrameResult) => frames.push(f),
            showError: (m: string) => errors.push(m),
        },
    };
}

const tick = () => new Promise((r) => setTimeout(r, 0));

describe('connect', () => {
    it('adopts the suggested orbit center from /meta and renders once', async () => {
        const svc = fakeService();
        const ui = collector();
        const session = new Session('http://svc', svc.fetchFn, ui.presenter, 32, 32);
        const meta = await session.connect();
        await tick();
        expect(meta.gaussian_counts).toEqual({ deformable: 10, static: 4 });
        expect(session.state.center).toEqual([0.1, 0.2, 0.3]);
        expect(session.state.radius).toBeCloseTo(4.5, 12);
        expect(ui.frames.length).toBe(1);
        expect(ui.frames[0].url).toContain('/render?pose=');
    });

    it('reports an error banner when /meta fails', async () => {
        const fetchFn: FetchLike = () => Promise.resolve({
            ok: false, status: 404,
            arrayBuffer: () => Promise.reject(new Error('no')),
            json: () => Promise.reject(new Error('no')),
        });
        const ui = collector();
        const session = new Session('http://svc', fetchFn, ui.presenter);
        await expect(session.connect()).rejects.toThrow('404');
    });
});

describe('scripted session', () => {
    it('orbit drag + scrub + playback issues well-formed requests, max one in flight, final canvas matches final response', async () => {
        const svc = fakeService({ holdRenders: true });
        const ui = collector();
        const session = new Session('http://svc', svc.fetchFn, ui.presenter, 48, 48);
        const connectPromise = session.connect();
        await tick();
        svc.releaseAll();
        await connectPromise;
        await tick();
        svc.releaseAll();
        await tick();

        // orbit drag: a burst of mousemove deltas
        for (let i = 0; i < 5; i++) {
            session.dragOrbit(6, -2);
        }
        await tick();
        svc.releaseAll();
        await tick();
        svc.releaseAll();
        await tick();

        // scrub the time slider 0 -> 1 in 10 rapid steps
        for (let i = 1; i <= 10; i++) {
            session.scrubTime(i / 10);
        }
        await tick();
        svc.releaseAll();
        await tick();
        svc.releaseAll();
        await tick();

        // play for 2 simulated seconds at 20 fps
        session.togglePlay();
        for (let i = 0; i < 40; i++) {
            session.tick(1 / 20);
            await tick();
            svc.releaseAll();
            await tick();
        }
        session.togglePlay();
        svc.releaseAll();
        await tick();
        svc.releaseAll();
        await tick();

        // every issued request is well-formed: 16 finite pose floats, t in [0,1]
        const renders = svc.urls.filter((u) => u.includes('/render'));
        expect(renders.length).toBeGreaterThan(4);
        for (const u of renders) {
            const q = new URL(u).searchParams;
            const pose = q.get('pose')!.split(',').map(Number);
            expect(pose).toHaveLength(16);
            expect(pose.every(Number.isFinite)).toBe(true);
            const t = Number(q.get('t'));
            expect(t).toBeGreaterThanOrEqual(0);
            expect(t).toBeLessThanOrEqual(1);
            expect(q.get('w')).toBe('48');
            expect(q.get('h')).toBe('48');
        }

        // never more than one request in flight
        expect(svc.maxInFlight).toBe(1);

        // the displayed image corresponds to the final state: the fake
        // service echoes the URL, so the last shown bytes must equal the
        // last COMPLETED request's URL, which must carry the final state
        expect(session.lastShown).not.toBeNull();
        const shownUrl = new TextDecoder().decode(session.lastShown!.bytes);
        const finalT = Number(new URL(shownUrl).searchParams.get('t'));
        expect(finalT).toBeCloseTo(session.state.time, 12);
        expect(shownUrl).toBe(session.lastShown!.url);
    });

    it('drops intermediate states under a rapid scrub (latest wins)', async () => {
        const svc = fakeService({ holdRenders: true });
        const ui = collector();
        const session = new Session('http://svc', svc.fetchFn, ui.presenter, 32, 32);
        const connectPromise = session.connect();
        await tick();
        svc.releaseAll();
        await connectPromise;
        await tick();
        svc.releaseAll();
        await tick();
        const before = svc.urls.filter((u) => u.includes('/render')).length;

        // 10 scrub steps while the first render hangs: only the first and
        // the newest survive; intermediates are dropped
        for (let i = 1; i <= 10; i++) {
            session.scrubTime(i / 10);
        }
        await tick();
        svc.releaseAll(); // completes the in-flight request
        await tick();
        svc.releaseAll(); // completes the queued latest request
        await tick();
        const after = svc.urls.filter((u) => u.includes('/render')).length;
        expect(after - before).toBeLessThanOrEqual(2);
        expect(after - before).toBeGreaterThanOrEqual(1);
        const last = svc.urls[svc.urls.length - 1];
        expect(Number(new URL(last).searchParams.get('t'))).toBe(1);
        // the stale first response was discarded, not displayed
        const shownUrl = new TextDecoder().decode(session.lastShown!.bytes);
        expect(Number(new URL(shownUrl).searchParams.get('t'))).toBe(1);
    });

    it('keeps the last good frame and reports a toastable error on failure', async () => {
        let fail = false;
        const good = new TextEncoder().encode('frame-bytes').buffer;
        const fetchFn: FetchLike = (url: string) => {
            if (url.endsWith('/meta')) {
                return Promise.resolve({
                    ok: true, status: 200,
                    arrayBuffer: () => Promise.reject(new Error('x')),
                    json: () => Promise.resolve({
                        resolution: { width: 32, height: 32 }, time_range: [0, 1],
                        scene_extent: 1, suggested_orbit_center: [0, 0, 0],
                        gaussian_counts: { deformable: 1, static: 0 },
                    }),
                });
            }
            return Promise.resolve({
                ok: !fail, status: fail ? 500 : 200,
                arrayBuffer: () => Promise.resolve(good),
                json: () => Promise.reject(new Error('x')),
            });
        };
        const ui = collector();
        const session = new Session('http://svc', fetchFn, ui.presenter, 32, 32);
        await session.connect();
        await tick();
        const framesBefore = ui.frames.length;
        fail = true;
        session.scrubTime(0.9);
        await tick();
        await tick();
        expect(ui.errors.length).toBe(1);
        expect(ui.frames.length).toBe(framesBefore); // last good frame retained
        expect(session.lastShown!.bytes).toBe(good);
    });
});
