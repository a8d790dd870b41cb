/**
 * Browser entry point: connect to the session service, mirror its frames
 * onto a canvas, orbit with right-drag / wheel, poke with left click.
 *
 * The canvas letterboxes to a square viewport so the server's square
 * frustum stays undistorted at any window shape.
 */
import { OrbitControl } from "./orbit.js";
import { cameraMessage, parseServerMessage, pokeMessage } from "./protocol.js";
import { ClientScene } from "./scene.js";

const RES = 480;

function statusLine(text: string): void {
  const el = document.getElementById("status");
  if (el) el.textContent = text;
}

function main(): void {
  const canvas = document.getElementById("view") as HTMLCanvasElement;
  canvas.width = RES;
  canvas.height = RES;
  const ctx = canvas.getContext("2d")!;
  const scene = new ClientScene();
  let orbit: OrbitControl | null = null;
  let socket: WebSocket | null = null;
  let frames = 0;
  let lastFpsStamp = performance.now();
  let fps = 0;

  function draw(): void {
    if (!scene.ready) return;
    const target = scene.render(RES, RES);
    const img = ctx.createImageData(RES, RES);
    for (let p = 0; p < RES * RES; p++) {
      img.data[p * 4] = target.rgb[p * 3];
      img.data[p * 4 + 1] = target.rgb[p * 3 + 1];
      img.data[p * 4 + 2] = target.rgb[p * 3 + 2];
      img.data[p * 4 + 3] = 255;
    }
    ctx.putImageData(img, 0, 0);
    frames += 1;
    const now = performance.now();
    if (now - lastFpsStamp > 1000) {
      fps = (frames * 1000) / (now - lastFpsStamp);
      frames = 0;
      lastFpsStamp = now;
      statusLine(`tick ${scene.lastTick} | ${fps.toFixed(0)} fps`);
    }
  }

  function connect(): void {
    const url = (document.getElementById("url") as HTMLInputElement).value;
    statusLine(`connecting to ${url} ...`);
    socket = new WebSocket(url);
    socket.onmessage = (ev) => {
      const msg = parseServerMessage(String(ev.data));
      if (msg === null) {
        console.warn("dropped malformed message", String(ev.data).slice(0, 120));
        return;
      }
      if (msg.type === "hello") {
        scene.applyHello(msg);
        const err = scene.verifyProjection(msg);
        if (err > 1e-5) {
          console.error(`projection mismatch vs server: ${err}`);
          statusLine(`projection mismatch ${err.toExponential(2)} - refusing to render`);
          scene.ready = false;
          return;
        }
        orbit = new OrbitControl(centerOf(msg), scene.camera);
        statusLine("connected");
      } else if (msg.type === "frame") {
        if (scene.applyFrame(msg)) draw();
      } else {
        console.warn("server error:", msg.code, msg.text);
      }
    };
    socket.onclose = () => {
      statusLine("disconnected - press connect to retry");
      scene.ready = false;
    };
    socket.onerror = () => statusLine("socket error (is the server running?)");
  }

  function centerOf(hello: { bodies: { nodes: number[][] }[] }): [number, number, number] {
    let s = [0, 0, 0];
    let n = 0;
    for (const b of hello.bodies) {
      for (const p of b.nodes) {
        s = [s[0] + p[0], s[1] + p[1], s[2] + p[2]];
        n += 1;
      }
    }
    return [s[0] / n, s[1] / n, s[2] / n];
  }

  function toNdc(ev: MouseEvent): [number, number] {
    const rect = canvas.getBoundingClientRect();
    const x = ((ev.clientX - rect.left) / rect.width) * 2 - 1;
    const y = 1 - ((ev.clientY - rect.top) / rect.height) * 2;
    return [x, y];
  }

  let dragging = false;
  let lastPokeTick = -1;
  let last: [number, number] = [0, 0];
  canvas.addEventListener("mousedown", (ev) => {
    if (ev.button === 2) {
      dragging = true;
      last = [ev.clientX, ev.clientY];
    } else if (socket && socket.readyState === WebSocket.OPEN) {
      const [x, y] = toNdc(ev);
      socket.send(pokeMessage(x, y, ev.button));
      lastPokeTick = scene.lastTick;
    }
  });
  canvas.addEventListener("mousemove", (ev) => {
    if (dragging && orbit && socket && socket.readyState === WebSocket.OPEN) {
      orbit.drag(ev.clientX - last[0], ev.clientY - last[1]);
      last = [ev.clientX, ev.clientY];
      const ext = orbit.extrinsics();
      scene.camera.rotation = ext.rotation;
      scene.camera.translation = ext.translation as [number, number, number];
      socket.send(cameraMessage(ext.rotation, ext.translation));
      draw();
    } else if ((ev.buttons & 1) && socket && socket.readyState === WebSocket.OPEN) {
      // click-drag repokes, throttled to one per server tick
      if (scene.lastTick !== lastPokeTick) {
        const [x, y] = toNdc(ev);
        socket.send(pokeMessage(x, y, 0));
        lastPokeTick = scene.lastTick;
      }
    }
  });
  window.addEventListener("mouseup", () => {
    dragging = false;
  });
  canvas.addEventListener("contextmenu", (ev) => ev.preventDefault());
  canvas.addEventListener("wheel", (ev) => {
    if (orbit && socket && socket.readyState === WebSocket.OPEN) {
      orbit.zoom(ev.deltaY > 0 ? 1.1 : 1 / 1.1);
      const ext = orbit.extrinsics();
      scene.camera.rotation = ext.rotation;
      scene.camera.translation = ext.translation as [number, number, number];
      socket.send(cameraMessage(ext.rotation, ext.translation));
      ev.preventDefault();
    }
  });

  document.getElementById("connect")!.addEventListener("click", connect);
  connect();
}

window.addEventListener("load", main);
