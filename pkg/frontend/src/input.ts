// Keyboard -> drive command mapping. Commands are only meaningful while
// teaching; the client sends them at 20 Hz while any drive key is held and
// sends a single zero on release (the server dead-man covers the rest).

export interface DriveCommand {
  v: number;
  omega: number;
}

const FORWARD = new Set(["w", "arrowup"]);
const REVERSE = new Set(["s", "arrowdown"]);
const LEFT = new Set(["a", "arrowleft"]);
const RIGHT = new Set(["d", "arrowright"]);
const STOP = new Set([" ", "space"]);

export class DriveInput {
  private held = new Set<string>();

  constructor(
    public vNominal = 1.0,
    public omegaNominal = 0.9,
  ) {}

  keyDown(key: string): void {
    this.held.add(key.toLowerCase());
  }

  keyUp(key: string): void {
    this.held.delete(key.toLowerCase());
  }

  clear(): void {
    this.held.clear();
  }

  get active(): boolean {
    for (const k of this.held) {
      if (
        FORWARD.has(k) ||
        REVERSE.has(k) ||
        LEFT.has(k) ||
        RIGHT.has(k) ||
        STOP.has(k)
      ) {
        return true;
      }
    }
    return false;
  }

  /** Current command; combinations add (forward + left = arcing turn). */
  command(): DriveCommand {
    let v = 0;
    let omega = 0;
    for (const k of this.held) {
      if (STOP.has(k)) return { v: 0, omega: 0 };
      if (FORWARD.has(k)) v += this.vNominal;
      if (REVERSE.has(k)) v -= this.vNominal;
      if (LEFT.has(k)) omega += this.omegaNominal;
      if (RIGHT.has(k)) omega -= this.omegaNominal;
    }
    v = Math.max(-this.vNominal, Math.min(this.vNominal, v));
    omega = Math.max(-this.omegaNominal, Math.min(this.omegaNominal, omega));
    return { v, omega };
  }
}
