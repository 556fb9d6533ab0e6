/**
 * DOM entry point: canvas, HUD, time slider and input bindings around a
 * Session. The server base URL comes from the ?server= query parameter
 * (default: same origin).
 */

import { FrameResult } from './api.js';
import { Session } from './session.js';

function el<T extends HTMLElement>(id: string): T {
    const node = document.getElementById(id);
    if (!node) {
        throw new Error(`missing element #${id}`);
    }
    return node as T;
}

function baseUrlFromQuery(): string {
    const params = new URLSearchParams(window.location.search);
    return (params.get('server') ?? window.location.origin).replace(/\/$/, '');
}

async function start(): Promise<void> {
    const canvas = el<HTMLCanvasElement>('view');
    const ctx = canvas.getContext('2d')!;
    const hud = el<HTMLDivElement>('hud');
    const banner = el<HTMLDivElement>('banner');
    const retry = el<HTMLButtonElement>('retry');
    const slider = el<HTMLInputElement>('time');
    const playButton = el<HTMLButtonElement>('play');

    let shownFrames = 0;
    let fpsWindowStart = performance.now();
    let fps = 0;

    const presenter = {
        show(frame: FrameResult): void {
            const blob = new Blob([frame.bytes], { type: 'image/png' });
            void createImageBitmap(blob).then((bmp) => {
                if (canvas.width !== bmp.width || canvas.height !== bmp.height) {
                    canvas.width = bmp.width;
                    canvas.height = bmp.height;
                }
                ctx.drawImage(bmp, 0, 0);
                shownFrames += 1;
                const now = performance.now();
                if (now - fpsWindowStart > 500) {
                    fps = (shownFrames * 1000) / (now - fpsWindowStart);
                    shownFrames = 0;
                    fpsWindowStart = now;
                }
                hud.textContent = `t = ${session.state.time.toFixed(3)}  |  ${fps.toFixed(1)} fps`;
                slider.value = String(session.state.time);
            });
        },
        showError(message: string): void {
            banner.textContent = `render service error: ${message}`;
            banner.style.display = 'block';
        },
    };

    const session = new Session(baseUrlFromQuery(), fetch.bind(window), presenter,
        canvas.width, canvas.height);

    retry.addEventListener('click', () => {
        banner.style.display = 'none';
        void connect();
    });

    async function connect(): Promise<void> {
        try {
            await session.connect();
            banner.style.display = 'none';
        } catch (err) {
            presenter.showError(err instanceof Error ? err.message : String(err));
        }
    }

    // left drag orbits, right drag pans, wheel zooms, space plays/pauses
    let dragging: 'orbit' | 'pan' | null = null;
    let last: [number, number] = [0, 0];
    canvas.addEventListener('contextmenu', (e) => e.preventDefault());
    canvas.addEventListener('mousedown', (e) => {
        dragging = e.button === 2 ? 'pan' : 'orbit';
        last = [e.clientX, e.clientY];
    });
    window.addEventListener('mouseup', () => {
        dragging = null;
    });
    window.addEventListener('mousemove', (e) => {
        if (!dragging) {
            return;
        }
        const dx = e.clientX - last[0];
        const dy = e.clientY - last[1];
        last = [e.clientX, e.clientY];
        if (dragging === 'orbit') {
            session.dragOrbit(dx, dy);
        } else {
            session.dragPan(dx, dy);
        }
    });
    canvas.addEventListener('wheel', (e) => {
        e.preventDefault();
        session.wheelZoom(e.deltaY);
    }, { passive: false });

    slider.addEventListener('input', () => {
        session.scrubTime(Number(slider.value));
    });
    playButton.addEventListener('click', () => {
        session.togglePlay();
        playButton.textContent = session.state.playing ? 'pause' : 'play';
    });
    window.addEventListener('keydown', (e) => {
        if (e.code === 'Space') {
            e.preventDefault();
            session.togglePlay();
            playButton.textContent = session.state.playing ? 'pause' : 'play';
        }
    });

    // playback timer at the state's configured fps
    let lastTick = performance.now();
    setInterval(() => {
        const now = performance.now();
        if (session.state.playing) {
            session.tick((now - lastTick) / 1000);
        }
        lastTick = now;
    }, 1000 / session.state.playbackFps);

    await connect();
}

window.addEventListener('load', () => {
    void start();
});
