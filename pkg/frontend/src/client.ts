// WebSocket client for the piloting service: connection lifecycle with
// retry, 20 Hz command streaming while input is active, and teach controls.

import { DriveInput } from "./input.js";
import {
  decodeServerMsg,
  encodeCommand,
  encodeControl,
  encodeHello,
  type ServerMsg,
  type TeachAction,
} from "./protocol.js";
import { ViewModel } from "./viewmodel.js";

const COMMAND_PERIOD_MS = 50; // 20 Hz while driving

export class TeleopClient {
  readonly vm = new ViewModel();
  readonly input = new DriveInput();
  private socket: WebSocket | null = null;
  private sender: ReturnType<typeof setInterval> | null = null;
  private wasActive = false;

  constructor(
    private url: string,
    private onChange: (vm: ViewModel) => void,
  ) {}

  connect(): void {
    this.vm.health = "connecting";
    this.onChange(this.vm);
    const socket = new WebSocket(this.url);
    this.socket = socket;
    socket.onopen = () => {
      // Re-attach to the running session on reconnect: teaching continues
      // server-side regardless of the connection.
      socket.send(encodeHello("trsim-teleop", this.vm.session || undefined));
      this.startSender();
    };
    socket.onmessage = (event: MessageEvent) => {
      const msg = decodeServerMsg(String(event.data));
      if (msg && this.vm.apply(msg)) {
        this.onChange(this.vm);
      }
    };
    socket.onclose = () => this.dropped();
    socket.onerror = () => this.dropped();
  }

  private dropped(): void {
    this.stopSender();
    this.socket = null;
    if (this.vm.health !== "lost") {
      this.vm.health = "lost";
      this.onChange(this.vm);
    }
  }

  /** Manual retry from the connection-lost UI control. */
  retry(): void {
    if (this.socket === null) {
      this.vm.tick = -1;
      this.connect();
    }
  }

  private startSender(): void {
    this.stopSender();
    this.sender = setInterval(() => this.pump(), COMMAND_PERIOD_MS);
  }

  private stopSender(): void {
    if (this.sender !== null) {
      clearInterval(this.sender);
      this.sender = null;
    }
  }

  /** Send the held command at 20 Hz; a single zero on release. */
  private pump(): void {
    if (!this.socket || this.socket.readyState !== 1) return;
    if (this.vm.mode !== "teaching") {
      this.wasActive = false;
      return; // inputs are ignored outside teaching mode
    }
    const active = this.input.active;
    if (active) {
      const { v, omega } = this.input.command();
      this.socket.send(encodeCommand(v, omega));
    } else if (this.wasActive) {
      this.socket.send(encodeCommand(0, 0));
    }
    this.wasActive = active;
  }

  control(action: TeachAction): void {
    if (this.socket && this.socket.readyState === 1) {
      this.socket.send(encodeControl(action));
    }
  }

  handleMessage(msg: ServerMsg): void {
    if (this.vm.apply(msg)) {
      this.onChange(this.vm);
    }
  }
}
