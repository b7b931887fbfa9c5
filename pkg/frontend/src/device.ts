// Coarse pointer-class detection, attached to session creation.

import type { Device } from "./types.js";

// The capability snapshot is passed in rather than read from globals so
// the decision rule is testable outside a browser.
export interface PointerEnvironment {
  maxTouchPoints: number;
  primaryCoarse: boolean; // matchMedia("(pointer: coarse)")
  primaryHover: boolean; // matchMedia("(hover: hover)")
}

// Touch-primary devices report a coarse primary pointer that cannot
// hover. Anything else, including hybrids with both touch and a mouse,
// defaults to pc: a present mouse is assumed to be the pointer in use.
export function detectDevice(env: PointerEnvironment): Device {
  if (env.maxTouchPoints > 0 && env.primaryCoarse && !env.primaryHover) {
    return "mobile";
  }
  return "pc";
}

export function browserEnvironment(): PointerEnvironment {
  return {
    maxTouchPoints: navigator.maxTouchPoints,
    primaryCoarse: window.matchMedia("(pointer: coarse)").matches,
    primaryHover: window.matchMedia("(hover: hover)").matches,
  };
}
