/** UI wiring: stateless view over gateway StateFrames. */
import {
  DEFAULT_SETTINGS,
  gamepadToDeltas,
  isNeutral,
  keysToDeltas,
  validateSettings,
  type InputSettings,
} from "./input.js";
import { GatewayClient, StateStream } from "./net.js";
import { drawTopView } from "./render.js";
import { CommandThrottle } from "./throttle.js";
import type { JogDeltas, StateFrame } from "./types.js";

const COMMAND_HZ = 10;
const SETTINGS_KEY = "svla-teleop-settings";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function loadSettings(): InputSettings {
  try {
    const raw = localStorage.getItem(SETTINGS_KEY);
    if (raw) return validateSettings({ ...DEFAULT_SETTINGS, ...JSON.parse(raw) });
  } catch {
    // fall through to defaults
  }
  return DEFAULT_SETTINGS;
}

export function main(): void {
  const client = new GatewayClient("");
  const canvas = el<HTMLCanvasElement>("topview");
  const ctx = canvas.getContext("2d");
  if (!ctx) throw new Error("canvas 2d context unavailable");
  const cameraImg = el<HTMLImageElement>("camera");
  const jointsPanel = el<HTMLElement>("joints");
  const statusBanner = el<HTMLElement>("status");
  const recordBtn = el<HTMLButtonElement>("record");
  const instructionBox = el<HTMLInputElement>("instruction");
  const verdictPanel = el<HTMLElement>("verdict");
  const gripSlider = el<HTMLInputElement>("grip");
  const episodesPanel = el<HTMLElement>("episodes");
  const settingsForm = el<HTMLFormElement>("settings");

  let settings = loadSettings();
  let lastFrame: StateFrame | null = null;
  const held = new Set<string>();

  // -- command stream (throttled to 10 Hz, latest jog wins) ----------------
  const throttle = new CommandThrottle<JogDeltas>(COMMAND_HZ, (deltas) => {
    client.command({ type: "jog", payload: { deltas } }).catch(() => undefined);
  });
  setInterval(() => {
    const pad = navigator.getGamepads?.()[0];
    let deltas = keysToDeltas(held, settings);
    if (pad && isNeutral(deltas)) {
      deltas = gamepadToDeltas(
        pad.axes,
        pad.buttons.map((b) => b.value),
        settings,
      );
    }
    if (!isNeutral(deltas)) throttle.offer(deltas);
    throttle.tick();
  }, 1000 / (2 * COMMAND_HZ));

  window.addEventListener("keydown", (ev) => {
    if (ev.target instanceof HTMLInputElement) return;
    held.add(ev.key.toLowerCase());
  });
  window.addEventListener("keyup", (ev) => held.delete(ev.key.toLowerCase()));
  window.addEventListener("blur", () => held.clear());

  gripSlider.addEventListener("change", () => {
    client
      .command({ type: "grip", payload: { opening: Number(gripSlider.value) } })
      .catch(() => undefined);
  });

  // -- record flow ---------------------------------------------------------
  recordBtn.addEventListener("click", async () => {
    const recording = lastFrame?.recorder.active ?? false;
    try {
      if (!recording) {
        const instruction = instructionBox.value.trim();
        if (!instruction) {
          verdictPanel.textContent = "enter an instruction first";
          return;
        }
        const res = await client.command({
          type: "record_start",
          payload: { instruction },
        });
        verdictPanel.textContent = res.ok
          ? `recording ${res.episode_id}`
          : `error: ${res.error}`;
      } else {
        const res = await client.command({ type: "record_stop" });
        verdictPanel.textContent = res.ok
          ? `saved ${res.episode_id}: ${res.steps} steps, replay ${res.replay_verdict}` +
            ` (divergence ${res.max_pose_divergence?.toExponential(2)} m)`
          : `error: ${res.error}`;
        refreshEpisodes();
      }
    } catch (err) {
      verdictPanel.textContent = `error: ${String(err)}`;
    }
  });

  async function refreshEpisodes(): Promise<void> {
    try {
      const eps = await client.episodes();
      episodesPanel.innerHTML = eps
        .map((e) => `<li><code>${e.id}</code> — ${e.instruction} (${e.steps} steps)</li>`)
        .join("");
    } catch {
      // transient; leave the old list
    }
  }

  // -- settings panel ------------------------------------------------------
  settingsForm.addEventListener("submit", (ev) => {
    ev.preventDefault();
    const data = new FormData(settingsForm);
    try {
      settings = validateSettings({
        ...settings,
        speed: Number(data.get("speed")),
        deadzone: Number(data.get("deadzone")),
      });
      localStorage.setItem(SETTINGS_KEY, JSON.stringify(settings));
      verdictPanel.textContent = "settings saved";
    } catch (err) {
      verdictPanel.textContent = `settings rejected: ${String(err)}`;
    }
  });

  // -- state stream --------------------------------------------------------
  const wsUrl = `${location.protocol === "https:" ? "wss" : "ws"}://${location.host}/ws/stream`;
  const stream = new StateStream(wsUrl, {
    onFrame: (frame) => {
      lastFrame = frame;
      drawTopView(ctx, frame, canvas.width);
      if (frame.frame_png) cameraImg.src = `data:image/png;base64,${frame.frame_png}`;
      const j = frame.joints;
      jointsPanel.innerHTML = [
        `clock ${frame.clock.toFixed(1)} s`,
        `shoulder ${j.shoulder.toFixed(3)} rad`,
        `elbow ${j.elbow.toFixed(3)} rad`,
        `yaw ${j.wrist_yaw.toFixed(3)} rad`,
        `z ${j.z.toFixed(3)} m`,
        `gripper ${(j.gripper * 1000).toFixed(0)} mm`,
        `ee (${frame.ee_pose.x.toFixed(3)}, ${frame.ee_pose.y.toFixed(3)})`,
        frame.attached_object ? `holding ${frame.attached_object}` : "holding nothing",
        frame.last_step_clamped ? "⚠ clamped at workspace edge" : "",
      ]
        .filter(Boolean)
        .map((line) => `<div>${line}</div>`)
        .join("");
      recordBtn.textContent = frame.recorder.active
        ? `stop (${frame.recorder.steps} steps)`
        : "record";
      instructionBox.disabled = frame.recorder.active;
    },
    onStatus: (status, detail) => {
      statusBanner.textContent =
        status === "open" ? "connected" : `${status}${detail ? `: ${detail}` : ""}`;
      statusBanner.className = status;
    },
  });
  stream.start();
  refreshEpisodes();
}

main();
