/** Wire types mirroring the gateway's StateFrame and Command schema. */

export interface Joints {
  shoulder: number;
  elbow: number;
  wrist_yaw: number;
  wrist_pitch: number;
  wrist_roll: number;
  z: number;
  gripper: number;
}

export interface EEPose {
  x: number;
  y: number;
  z: number;
  roll: number;
  pitch: number;
  yaw: number;
}

export interface SceneObject {
  id: string;
  kind: string;
  x: number;
  y: number;
  z: number;
  yaw: number;
  half_extents: [number, number, number];
}

export interface Workspace {
  r_min: number;
  r_max: number;
  shoulder_limit: number;
  elbow_limit: number;
}

export interface RecorderStatus {
  active: boolean;
  episode_id: string | null;
  steps: number;
}

export interface StateFrame {
  clock: number;
  joints: Joints;
  ee_pose: EEPose;
  objects: SceneObject[];
  attached_object: string | null;
  last_step_clamped: boolean;
  workspace: Workspace;
  recorder: RecorderStatus;
  camera: string;
  frame_png: string | null;
}

export type JogDeltas = [number, number, number, number, number, number];

export type Command =
  | { type: "jog"; payload: { deltas: JogDeltas } }
  | { type: "grip"; payload: { opening: number } }
  | { type: "record_start"; payload: { instruction: string } }
  | { type: "record_stop" }
  | { type: "reset" }
  | { type: "spawn"; payload: { scene: unknown; seed?: number } };

export interface CommandResult {
  ok: boolean;
  error?: string;
  episode_id?: string;
  steps?: number;
  replay_verdict?: "pass" | "fail";
  max_pose_divergence?: number;
}

export interface EpisodeSummary {
  id: string;
  instruction: string;
  steps: number;
  outcome: string | null;
}
