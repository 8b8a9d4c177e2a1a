/** Client-side validation mirroring the gateway's command schema, so bad
 * commands are caught before they hit the wire. */
import type { Command, StateFrame } from "./types.js";

export class SchemaError extends Error {}

const COMMAND_TYPES = new Set([
  "jog",
  "grip",
  "record_start",
  "record_stop",
  "reset",
  "spawn",
]);

const JOG_FIELDS = ["dx", "dy", "dz", "droll", "dpitch", "dyaw"];

function isRecord(v: unknown): v is Record<string, unknown> {
  return typeof v === "object" && v !== null && !Array.isArray(v);
}

/** Throws SchemaError on anything the gateway would reject with 400. */
export function validateCommand(cmd: unknown): Command {
  if (!isRecord(cmd) || typeof cmd.type !== "string") {
    throw new SchemaError("command must be an object with a 'type' field");
  }
  if (!COMMAND_TYPES.has(cmd.type)) {
    throw new SchemaError(`unknown command type '${cmd.type}'`);
  }
  const payload = cmd.payload ?? {};
  if (!isRecord(payload)) {
    throw new SchemaError("payload must be an object");
  }
  if (cmd.type === "jog") {
    const deltas = payload.deltas;
    if (!Array.isArray(deltas) || deltas.length !== 6) {
      throw new SchemaError("jog payload needs 'deltas' with 6 values");
    }
    deltas.forEach((v, i) => {
      if (typeof v !== "number" || !Number.isFinite(v)) {
        throw new SchemaError(`jog delta ${JOG_FIELDS[i]} is not a number`);
      }
      if (v < -1 || v > 1) {
        throw new SchemaError(`jog delta ${JOG_FIELDS[i]}=${v} outside [-1, 1]`);
      }
    });
  } else if (cmd.type === "grip") {
    const opening = payload.opening;
    if (typeof opening !== "number" || !Number.isFinite(opening)) {
      throw new SchemaError("grip payload needs a numeric 'opening'");
    }
  } else if (cmd.type === "record_start") {
    const instruction = payload.instruction;
    if (typeof instruction !== "string" || instruction.trim() === "") {
      throw new SchemaError("record_start payload needs a non-empty 'instruction'");
    }
  } else if (cmd.type === "spawn") {
    if (!("scene" in payload)) {
      throw new SchemaError("spawn payload needs a 'scene' spec");
    }
  }
  return cmd as unknown as Command;
}

/** Light structural check on incoming state frames: the UI is stateless and
 * everything it shows comes from these, so reject malformed ones loudly. */
export function parseStateFrame(data: unknown): StateFrame {
  if (!isRecord(data)) throw new SchemaError("state frame must be an object");
  for (const key of [
    "clock",
    "joints",
    "ee_pose",
    "objects",
    "workspace",
    "recorder",
  ]) {
    if (!(key in data)) throw new SchemaError(`state frame missing '${key}'`);
  }
  if (!isRecord(data.joints) || typeof (data.joints as any).shoulder !== "number") {
    throw new SchemaError("state frame joints malformed");
  }
  if (!Array.isArray(data.objects)) {
    throw new SchemaError("state frame objects malformed");
  }
  return data as unknown as StateFrame;
}
