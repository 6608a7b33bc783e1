// Chat client: text entry, transcript, audio playback, and a canvas
// stick figure animated by the motion clip, clock-slaved to the audio.

import {
  PlaybackBundle,
  TOPIC_PLAYBACK,
  TOPIC_TELEMETRY,
  TOPIC_USER_UTTERANCE,
  decodeBundle,
  decodeTelemetry,
  encodeUtterance,
  isErrorBundle,
} from "./messages.js";
import { PlaybackController } from "./playback.js";
import { DEFAULT_SKELETON, forwardKinematics2D, limbShade } from "./skeleton.js";
import { StompClient } from "./stomp.js";

const BROKER_URL =
  (window as any).GESTUREPIPE_BROKER_URL ?? "ws://127.0.0.1:61614/stomp";

const sessionId = `web-${Math.random().toString(36).slice(2, 10)}`;
let utteranceId = 0;
let client: StompClient | null = null;
let controller: PlaybackController | null = null;
let audio: HTMLAudioElement | null = null;

const transcript = document.getElementById("transcript") as HTMLUListElement;
const input = document.getElementById("input") as HTMLInputElement;
const sendButton = document.getElementById("send") as HTMLButtonElement;
const retryButton = document.getElementById("retry") as HTMLButtonElement;
const banner = document.getElementById("banner") as HTMLDivElement;
const debugPanel = document.getElementById("debug") as HTMLPreElement;
const canvas = document.getElementById("figure") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;

function addLine(kind: "user" | "agent" | "system", text: string): void {
  const li = document.createElement("li");
  li.className = kind;
  li.textContent = `${kind === "user" ? "you" : kind}: ${text}`;
  transcript.appendChild(li);
  transcript.scrollTop = transcript.scrollHeight;
}

function setConnected(connected: boolean): void {
  banner.textContent = connected ? "connected" : "disconnected";
  banner.className = connected ? "ok" : "bad";
  retryButton.hidden = connected;
  sendButton.disabled = !connected;
}

function setBusy(busy: boolean): void {
  sendButton.disabled = busy || client === null;
  input.disabled = busy;
}

function drawFrame(frame: number[]): void {
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const scale = canvas.height / 1.6; // metres to pixels
  const rootX = canvas.width / 2;
  const rootY = canvas.height * 0.9;
  const points = forwardKinematics2D(DEFAULT_SKELETON, frame).map((p) => ({
    x: rootX + p.x * scale,
    y: rootY - p.y * scale,
  }));
  ctx.lineWidth = 4;
  for (let j = 1; j < points.length; j++) {
    const parent = DEFAULT_SKELETON.parents[j];
    const shade = Math.round(40 + 150 * limbShade(frame, j));
    ctx.strokeStyle = `rgb(${shade}, ${shade}, 220)`;
    ctx.beginPath();
    ctx.moveTo(points[parent].x, points[parent].y);
    ctx.lineTo(points[j].x, points[j].y);
    ctx.stroke();
  }
  const head = points[DEFAULT_SKELETON.jointNames.indexOf("Head")];
  ctx.beginPath();
  ctx.arc(head.x, head.y, 12, 0, 2 * Math.PI);
  ctx.stroke();
}

function renderLoop(): void {
  if (controller && audio) {
    drawFrame(controller.currentFrame());
    const stats = controller.playbackStats();
    debugPanel.textContent =
      `frame ${stats.lastFrame}/${controller.motion.frames.length - 1}` +
      ` dropped ${stats.framesDropped} drift ${stats.driftMs.toFixed(1)}ms`;
    if (audio.ended) {
      controller = null;
      setBusy(false);
    }
  }
  requestAnimationFrame(renderLoop);
}

function startPlayback(bundle: PlaybackBundle): void {
  const blob = new Blob([bundle.audioWav.buffer as ArrayBuffer], { type: "audio/wav" });
  audio = new Audio(URL.createObjectURL(blob));
  const audioElement = audio;
  try {
    // animation clock is the audio position: pausing freezes the figure
    controller = new PlaybackController(bundle, () => audioElement.currentTime);
  } catch (err) {
    addLine("system", String(err));
    setBusy(false);
    return;
  }
  void audio.play();
}

function handleBundleMessage(body: Uint8Array): void {
  const bundle = decodeBundle(body);
  if (bundle.sessionId !== sessionId) return;
  if (isErrorBundle(bundle)) {
    addLine("system", bundle.error);
    setBusy(false);
    return;
  }
  addLine("agent", bundle.replyText);
  startPlayback(bundle);
}

async function connect(): Promise<void> {
  try {
    client = await StompClient.connect(BROKER_URL);
  } catch (err) {
    setConnected(false);
    addLine("system", String(err));
    return;
  }
  setConnected(true);
  client.onDisconnect = () => {
    client = null;
    setConnected(false);
  };
  client.subscribe(TOPIC_PLAYBACK, (frame) => handleBundleMessage(frame.body));
  client.subscribe(TOPIC_TELEMETRY, (frame) => {
    const t = decodeTelemetry(frame.body);
    if (t.sessionId === sessionId && t.stage === "total") {
      addLine("system", `responded in ${t.elapsedMs.toFixed(0)} ms`);
    }
  });
}

function submit(): void {
  const text = input.value.trim();
  if (!text || client === null) return;
  addLine("user", text);
  client.publish(
    TOPIC_USER_UTTERANCE,
    encodeUtterance(sessionId, utteranceId++, text),
    [["content-type", "application/json"]],
  );
  input.value = "";
  setBusy(true);
}

sendButton.addEventListener("click", submit);
input.addEventListener("keydown", (e) => {
  if (e.key === "Enter") submit();
});
retryButton.addEventListener("click", () => void connect());

void connect();
renderLoop();
