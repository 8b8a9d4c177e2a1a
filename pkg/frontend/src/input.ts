/** Keyboard/gamepad state -> jog deltas, with remappable bindings. */
import type { JogDeltas } from "./types.js";

/** One binding maps a key to (axis index, sign). Axes follow the gateway's
 * jog order: dx, dy, dz, droll, dpitch, dyaw. */
export interface KeyBindings {
  [key: string]: { axis: number; sign: 1 | -1 };
}

export const DEFAULT_BINDINGS: KeyBindings = {
  w: { axis: 0, sign: 1 },
  s: { axis: 0, sign: -1 },
  a: { axis: 1, sign: 1 },
  d: { axis: 1, sign: -1 },
  q: { axis: 2, sign: 1 },
  e: { axis: 2, sign: -1 },
  arrowleft: { axis: 5, sign: 1 },
  arrowright: { axis: 5, sign: -1 },
  arrowup: { axis: 4, sign: 1 },
  arrowdown: { axis: 4, sign: -1 },
  "[": { axis: 3, sign: 1 },
  "]": { axis: 3, sign: -1 },
};

export interface InputSettings {
  bindings: KeyBindings;
  /** Jog magnitude per tick in [0, 1] (fraction of the per-step bound). */
  speed: number;
  /** Gamepad stick deadzone. */
  deadzone: number;
}

export const DEFAULT_SETTINGS: InputSettings = {
  bindings: DEFAULT_BINDINGS,
  speed: 0.4,
  deadzone: 0.15,
};

export class SettingsError extends Error {}

/** Validates a settings object (e.g. from the settings panel / storage). */
export function validateSettings(s: InputSettings): InputSettings {
  if (!(s.speed > 0 && s.speed <= 1)) {
    throw new SettingsError(`speed ${s.speed} outside (0, 1]`);
  }
  if (!(s.deadzone >= 0 && s.deadzone < 1)) {
    throw new SettingsError(`deadzone ${s.deadzone} outside [0, 1)`);
  }
  for (const [key, b] of Object.entries(s.bindings)) {
    if (!Number.isInteger(b.axis) || b.axis < 0 || b.axis > 5) {
      throw new SettingsError(`binding '${key}' has invalid axis ${b.axis}`);
    }
    if (b.sign !== 1 && b.sign !== -1) {
      throw new SettingsError(`binding '${key}' has invalid sign`);
    }
  }
  return s;
}

/** Fold the set of currently held keys into jog deltas. Opposing keys
 * cancel; everything is clamped to [-1, 1] and scaled by speed. */
export function keysToDeltas(
  held: Iterable<string>,
  settings: InputSettings = DEFAULT_SETTINGS,
): JogDeltas {
  const d: JogDeltas = [0, 0, 0, 0, 0, 0];
  for (const raw of held) {
    const b = settings.bindings[raw.toLowerCase()];
    if (b) d[b.axis] += b.sign;
  }
  return d.map(
    (v) => Math.max(-1, Math.min(1, v)) * settings.speed,
  ) as JogDeltas;
}

/** Map gamepad axes/buttons to jog deltas. Left stick: x/y, triggers: z,
 * right stick: yaw/pitch. */
export function gamepadToDeltas(
  axes: ReadonlyArray<number>,
  buttons: ReadonlyArray<number>,
  settings: InputSettings = DEFAULT_SETTINGS,
): JogDeltas {
  const dz = (v: number | undefined) => {
    const x = v ?? 0;
    return Math.abs(x) < settings.deadzone ? 0 : Math.max(-1, Math.min(1, x));
  };
  const lift = (buttons[7] ?? 0) - (buttons[6] ?? 0); // RT up, LT down
  const d: JogDeltas = [
    -dz(axes[1]), // stick up = +x (away from base)
    -dz(axes[0]), // stick left = +y
    Math.max(-1, Math.min(1, lift)),
    0,
    -dz(axes[3]),
    -dz(axes[2]),
  ];
  return d.map((v) => v * settings.speed) as JogDeltas;
}

export function isNeutral(d: JogDeltas): boolean {
  return d.every((v) => v === 0);
}
