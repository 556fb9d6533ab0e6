/**
 * Viewer state and camera math. Pure functions, no DOM: the UI layer feeds
 * input events in and reads poses/times out.
 *
 * Pose convention (must match the render service): row-major 4x4
 * world-to-camera matrix, camera axes x right, y down, z forward. The orbit
 * uses y-up spherical coordinates: azimuth 0 / elevation 0 puts the camera
 * at center + (0, 0, radius) looking along -z; elevation is latitude in
 * (-pi/2, pi/2), clamped short of the poles.
 */

export interface ViewerState {
    center: [number, number, number];
    azimuth: number;   // radians around world y
    elevation: number; // latitude in (-pi/2, pi/2)
    radius: number;
    time: number;      // normalized scene time in [0, 1]
    playing: boolean;
    playbackFps: number;
    loopSeconds: number; // seconds for one full scrub of time 0 -> 1
}

const ELEVATION_LIMIT = Math.PI / 2 - 1e-3;
const MIN_RADIUS = 1e-3;

export function defaultState(): ViewerState {
    return {
        center: [0, 0, 0],
        azimuth: 0,
        elevation: 0.3,
        radius: 4,
        time: 0,
        playing: false,
        playbackFps: 20,
        loopSeconds: 4,
    };
}

export function clampState(s: ViewerState): ViewerState {
    return {
        ...s,
        elevation: Math.min(ELEVATION_LIMIT, Math.max(-ELEVATION_LIMIT, s.elevation)),
        radius: Math.max(MIN_RADIUS, s.radius),
        time: Math.min(1, Math.max(0, s.time)),
    };
}

export function orbit(s: ViewerState, dAzimuth: number, dElevation: number): ViewerState {
    return clampState({ ...s, azimuth: s.azimuth + dAzimuth, elevation: s.elevation + dElevation });
}

export function zoom(s: ViewerState, factor: number): ViewerState {
    return clampState({ ...s, radius: s.radius * factor });
}

export function pan(s: ViewerState, dxPixels: number, dyPixels: number, canvasHeight: number): ViewerState {
    // move the orbit center in the camera's image plane; scale so a
    // full-canvas drag pans roughly one view height at the center distance
    const worldPerPixel = s.radius / canvasHeight;
    const [right, down] = cameraAxes(s);
    const c = s.center;
    const move = (a: number[], k: number) => [a[0] * k, a[1] * k, a[2] * k];
    const r = move(right, -dxPixels * worldPerPixel);
    const d = move(down, -dyPixels * worldPerPixel);
    return clampState({
        ...s,
        center: [c[0] + r[0] + d[0], c[1] + r[1] + d[1], c[2] + r[2] + d[2]],
    });
}

export function eyePosition(s: ViewerState): [number, number, number] {
    const ce = Math.cos(s.elevation);
    return [
        s.center[0] + s.radius * ce * Math.sin(s.azimuth),
        s.center[1] + s.radius * Math.sin(s.elevation),
        s.center[2] + s.radius * ce * Math.cos(s.azimuth),
    ];
}

function normalize(v: number[]): number[] {
    const n = Math.hypot(v[0], v[1], v[2]);
    return [v[0] / n, v[1] / n, v[2] / n];
}

function cross(a: number[], b: number[]): number[] {
    return [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ];
}

function cameraAxes(s: ViewerState): [number[], number[], number[]] {
    const eye = eyePosition(s);
    const forward = normalize([
        s.center[0] - eye[0], s.center[1] - eye[1], s.center[2] - eye[2],
    ]);
    let right = cross(forward, [0, 1, 0]);
    const rn = Math.hypot(right[0], right[1], right[2]);
    if (rn < 1e-9) {
        right = cross(forward, [1, 0, 0]);
    }
    right = normalize(right);
    const down = cross(forward, right);
    return [right, down, forward];
}

/** Row-major 16-float world-to-camera matrix for the current orbit state. */
export function stateToPose(s: ViewerState): number[] {
    const eye = eyePosition(s);
    const [right, down, forward] = cameraAxes(s);
    const dot = (a: number[], b: number[]) =>
        a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    return [
        right[0], right[1], right[2], -dot(right, eye),
        down[0], down[1], down[2], -dot(down, eye),
        forward[0], forward[1], forward[2], -dot(forward, eye),
        0, 0, 0, 1,
    ];
}

/** Advance playback by dt seconds; time wraps at 1. Paused states freeze. */
export function tickPlayback(s: ViewerState, dtSeconds: number): ViewerState {
    if (!s.playing) {
        return s;
    }
    const t = s.time + dtSeconds / s.loopSeconds;
    return { ...s, time: t - Math.floor(t) };
}

/** Per-tick time step at the configured playback rate: 1/(fps*duration). */
export function playbackStep(s: ViewerState): number {
    return 1 / (s.playbackFps * s.loopSeconds);
}
