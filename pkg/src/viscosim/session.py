"""Interactive runtime: fixed-tick learned dynamics behind a wire protocol.

One simulation thread owns the :class:`Scene`; every tick it gathers contact
and poke forces, advances each body through its trained model, and emits a
frame (model-space positions plus per-vertex colormap colors).  Network
reader threads only deposit parsed messages into a queue that the tick loop
drains, so there is no shared mutable state beyond that queue.

Wire protocol (``wire/1``): JSON text messages over WebSocket framing with a
``type`` tag - ``hello``, ``frame``, ``poke``, ``camera``, ``reset``,
``error``.  Simulation time advances exactly ``tick_dt`` per tick no matter
what the wall clock does.
"""
from __future__ import annotations

import json
import queue
import socket
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import ws
from .errors import RolloutDivergenceError, SchemaError
from .generic import step
from .gnn import TrainedSimulator, forward, load_checkpoint
from .graph import mesh_to_graph
from .interaction import (Poke, contact_forces, pick_nodes, pick_ray,
                          poke_force, ray_hit_surface)
from .mesh import SolidMesh, StateField, load_mesh
from .rendermath import (Camera, ModelPose, PhongMaterial, colormap, mvp_matrix,
                         project)

WIRE_SCHEMA = "wire/1"

SCALAR_FIELDS = ("sigma_xx", "sigma_yy", "sigma_zz", "sigma_xy", "sigma_yz",
                 "sigma_xz", "speed", "displacement")


def scalar_field(body: "Body", name: str) -> np.ndarray:
    if name.startswith("sigma_"):
        return body.state.sigma[:, SCALAR_FIELDS.index(name)]
    if name == "speed":
        return np.linalg.norm(body.state.v, axis=1)
    if name == "displacement":
        return np.linalg.norm(body.state.q - body.mesh.rest_positions, axis=1)
    raise ValueError(f"unknown scalar field {name!r}")


@dataclass
class Body:
    name: str
    mesh: SolidMesh
    sim: TrainedSimulator
    pose: ModelPose
    state: StateField
    pokes: list[Poke] = field(default_factory=list)

    def reset(self):
        self.state = StateField.rest(self.mesh)
        self.pokes.clear()


@dataclass
class Scene:
    bodies: list[Body]
    camera: Camera
    tick_dt: float
    contact_eps: float = 1.0
    contact_k: float = 1.0
    colormap_lo: float = -1.0
    colormap_hi: float = 1.0
    scalar: str = "sigma_xx"
    poke_magnitude: float = 1.0
    poke_duration: int = 10
    pick_eps: float = 1.0
    light_direction: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    light: PhongMaterial = field(default_factory=PhongMaterial)
    tick_index: int = 0

    def reset(self):
        for body in self.bodies:
            body.reset()
        self.tick_index = 0


def _external_forces(scene: Scene) -> list[np.ndarray]:
    """Per-body model-space force arrays from contact plus active pokes."""
    forces = [np.zeros((b.mesh.n_nodes, 3)) for b in scene.bodies]
    if len(scene.bodies) > 1:
        world = [_world_state(b) for b in scene.bodies]
        for i in range(len(scene.bodies)):
            for j in range(i + 1, len(scene.bodies)):
                bi, bj = scene.bodies[i], scene.bodies[j]
                fa, fb = contact_forces(
                    world[i], world[j], scene.contact_eps, scene.contact_k,
                    rest_a=bi.pose.apply(bi.mesh.rest_positions),
                    rest_b=bj.pose.apply(bj.mesh.rest_positions))
                # contact acts in world space; bring it back into each model frame
                forces[i] += bi.pose.rotate_into_model(fa)
                forces[j] += bj.pose.rotate_into_model(fb)
    for body, f in zip(scene.bodies, forces):
        for poke in body.pokes:
            if poke.active:
                f[list(poke.node_ids)] += poke.per_node_force()
    return forces


def _world_state(body: Body) -> StateField:
    return StateField(body.pose.apply(body.state.q), body.state.v, body.state.sigma,
                      body.state.time)


def tick(scene: Scene) -> tuple[dict, dict | None]:
    """Advance the scene one tick; returns (frame message, optional error)."""
    error = None
    forces = _external_forces(scene)
    try:
        for body, f in zip(scene.bodies, forces):
            g = mesh_to_graph(body.mesh, body.state, load=None, stats=body.sim.stats,
                              node_forces=f)
            out = forward(body.sim.model, g)
            body.state = step(body.state, out, scene.tick_dt, body.sim.stats,
                              body.mesh, step_index=scene.tick_index)
    except RolloutDivergenceError as exc:
        scene.reset()
        error = {"type": "error", "schema": WIRE_SCHEMA, "code": "divergence",
                 "text": f"{exc}; scene reset to rest"}
    for body in scene.bodies:
        for poke in body.pokes:
            poke.remaining_steps -= 1
        body.pokes = [p for p in body.pokes if p.remaining_steps > 0]
    scene.tick_index += 1
    return make_frame(scene), error


def make_frame(scene: Scene) -> dict:
    bodies = []
    for body in scene.bodies:
        s = scalar_field(body, scene.scalar)
        colors = colormap(s, scene.colormap_lo, scene.colormap_hi)
        bodies.append({
            "name": body.name,
            "positions": body.state.q.tolist(),
            "colors": colors.tolist(),
            "scalar": s.tolist(),
        })
    return {"type": "frame", "schema": WIRE_SCHEMA, "tick": scene.tick_index,
            "bodies": bodies}


def make_hello(scene: Scene) -> dict:
    # cross-implementation projection fixtures: the viewer re-projects these
    # points and checks against the ndc values shipped here
    probe = np.array([[0.0, 0.0, 0.0], [1.0, 2.0, -3.0], [-2.5, 0.5, 4.0]])
    test_pose = ModelPose(translation=np.array([0.5, -1.0, -10.0]))
    _, ndc = project(mvp_matrix(test_pose, scene.camera), probe)
    bodies = []
    for body in scene.bodies:
        bodies.append({
            "name": body.name,
            "nodes": body.mesh.rest_positions.tolist(),
            "surface": body.mesh.surface_triangles.tolist(),
            "edges": body.mesh.undirected_edges.tolist(),
            "fixed": body.mesh.fixed_nodes.tolist(),
            "pose": body.pose.to_dict(),
        })
    from .rendermath import COLORMAP_STOPS
    return {
        "type": "hello", "schema": WIRE_SCHEMA,
        "tick_dt": scene.tick_dt,
        "scalar_field": scene.scalar,
        "colormap": {"lo": scene.colormap_lo, "hi": scene.colormap_hi,
                     "stops": COLORMAP_STOPS.tolist()},
        "camera": scene.camera.to_dict(),
        "light": {
            "direction": scene.light_direction.tolist(),
            "k_ambient": scene.light.k_ambient,
            "k_diffuse": scene.light.k_diffuse,
            "k_specular": scene.light.k_specular,
            "shininess": scene.light.shininess,
        },
        "bodies": bodies,
        "mvp_test": {"pose": test_pose.to_dict(), "points": probe.tolist(),
                     "ndc": ndc.tolist()},
    }


def handle_message(scene: Scene, msg: dict) -> list[dict]:
    """Apply one wire message; returns replies (empty for silent success)."""
    if not isinstance(msg, dict) or "type" not in msg:
        return [{"type": "error", "schema": WIRE_SCHEMA, "code": "bad_message",
                 "text": "messages must be objects with a 'type' tag"}]
    kind = msg["type"]
    if kind == "poke":
        try:
            ndc = (float(msg["ndc_xy"][0]), float(msg["ndc_xy"][1]))
        except (KeyError, TypeError, ValueError, IndexError):
            return [{"type": "error", "schema": WIRE_SCHEMA, "code": "bad_poke",
                     "text": "poke needs ndc_xy: [x, y]"}]
        apply_poke(scene, ndc)
        return []
    if kind == "camera":
        try:
            ext = msg["extrinsics"]
            scene.camera = Camera(scene.camera.fov, scene.camera.z_near, scene.camera.z_far,
                                  np.asarray(ext["rotation"], dtype=np.float64),
                                  np.asarray(ext["translation"], dtype=np.float64))
        except (KeyError, TypeError, ValueError) as exc:
            return [{"type": "error", "schema": WIRE_SCHEMA, "code": "bad_camera",
                     "text": str(exc)}]
        return []
    if kind == "reset":
        scene.reset()
        return []
    return [{"type": "error", "schema": WIRE_SCHEMA, "code": "unknown_type",
             "text": f"unknown message type {kind!r}"}]


def apply_poke(scene: Scene, ndc_xy) -> Poke | None:
    """Ray-cast through the pixel, pick the nearest body surface, enqueue a
    poke along the ray.  Returns the poke, or None when nothing was hit."""
    eye = scene.camera.translation
    best = None  # (world distance, body, model point, ray dir)
    for body in scene.bodies:
        mvp = mvp_matrix(body.pose, scene.camera)
        try:
            origin, direction = pick_ray(ndc_xy, mvp)
        except ValueError:
            continue
        t = ray_hit_surface(origin, direction, body.state.q, body.mesh.surface_triangles)
        if t is None:
            continue
        point = origin + t * direction
        dist = float(np.linalg.norm(body.pose.apply(point[None, :])[0] - eye))
        if best is None or dist < best[0]:
            best = (dist, body, point, direction)
    if best is None:
        return None
    _, body, point, direction = best
    picked = pick_nodes(point, body.state, scene.pick_eps)
    poke = poke_force(picked, direction, scene.poke_magnitude, scene.poke_duration,
                      model_point=point)
    if poke is not None:
        body.pokes.append(poke)
    return poke


def replay(scene: Scene, events: list[dict], n_ticks: int) -> list[str]:
    """Deterministic headless run: events applied at their tick indices.

    Returns the serialized frame stream (one JSON string per tick, errors
    interleaved), byte-identical across runs with the same inputs.
    """
    by_tick: dict[int, list[dict]] = {}
    for ev in events:
        by_tick.setdefault(int(ev["tick"]), []).append(ev["msg"])
    out: list[str] = []
    for t in range(n_ticks):
        for msg in by_tick.get(t, []):
            for reply in handle_message(scene, msg):
                out.append(json.dumps(reply))
        frame, error = tick(scene)
        if error is not None:
            out.append(json.dumps(error))
        out.append(json.dumps(frame))
    return out


# ---------------------------------------------------------------------------
# scene files


def load_scene(path: str) -> Scene:
    """Read a scene/1 config; mesh and checkpoint paths resolve relative to it."""
    import os

    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema") != "scene/1":
        raise SchemaError(f"expected schema 'scene/1', got {doc.get('schema')!r}", location=path)
    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    sims: dict[str, TrainedSimulator] = {}
    bodies = []
    for spec in doc["bodies"]:
        mesh = load_mesh(resolve(spec["mesh"]))
        ckpt_path = resolve(spec["checkpoint"])
        if ckpt_path not in sims:
            sims[ckpt_path] = load_checkpoint(ckpt_path)
        pose = ModelPose.from_dict(spec.get("pose", {}))
        bodies.append(Body(name=spec.get("name", f"body{len(bodies)}"), mesh=mesh,
                           sim=sims[ckpt_path], pose=pose, state=StateField.rest(mesh)))
    cam = Camera.from_dict(doc.get("camera", {}))
    contact = doc.get("contact", {})
    cmap = doc.get("colormap", {})
    poke = doc.get("poke", {})
    light = doc.get("light", {})
    direction = np.asarray(light.get("direction", [0.0, 0.0, 1.0]), dtype=np.float64)
    direction = direction / np.linalg.norm(direction)
    return Scene(
        bodies=bodies,
        camera=cam,
        tick_dt=float(doc.get("tick_dt", 5e-2)),
        contact_eps=float(contact.get("eps", 1.0)),
        contact_k=float(contact.get("k", 1.0)),
        colormap_lo=float(cmap.get("lo", -1.0)),
        colormap_hi=float(cmap.get("hi", 1.0)),
        scalar=doc.get("scalar_field", "sigma_xx"),
        poke_magnitude=float(poke.get("magnitude", 1.0)),
        poke_duration=int(poke.get("duration", 10)),
        pick_eps=float(poke.get("pick_eps", 1.0)),
        light_direction=direction,
    )


# ---------------------------------------------------------------------------
# socket service


class SessionServer:
    """Threaded WebSocket service around one scene."""

    def __init__(self, scene: Scene, host: str = "127.0.0.1", port: int = 8765,
                 realtime: bool = True):
        self.scene = scene
        self.host = host
        self.port = port
        self.realtime = realtime
        self.inbox: queue.Queue = queue.Queue()
        self.clients: list[ws.WsConnection] = []
        self.clients_lock = threading.Lock()
        self.stop_flag = threading.Event()
        try:
            self.listener = socket.create_server((host, port))
        except OSError as exc:
            raise OSError(f"cannot bind {host}:{port}: {exc}") from exc

    def _acceptor(self):
        while not self.stop_flag.is_set():
            try:
                conn, _ = self.listener.accept()
            except OSError:
                return
            try:
                client = ws.server_handshake(conn)
                client.send_text(json.dumps(make_hello(self.scene)))
            except (ConnectionError, OSError):
                conn.close()
                continue
            with self.clients_lock:
                self.clients.append(client)
            threading.Thread(target=self._reader, args=(client,), daemon=True).start()

    def _reader(self, client: ws.WsConnection):
        while not self.stop_flag.is_set():
            try:
                text = client.recv_text()
            except (ConnectionError, OSError):
                text = None
            if text is None:
                self._drop(client)
                return
            self.inbox.put((client, text))

    def _drop(self, client: ws.WsConnection):
        with self.clients_lock:
            if client in self.clients:
                self.clients.remove(client)
        client.close()

    def _send(self, client: ws.WsConnection, text: str):
        try:
            client.send_text(text)
        except OSError:
            self._drop(client)

    def broadcast(self, text: str):
        with self.clients_lock:
            targets = list(self.clients)
        for conn in targets:
            self._send(conn, text)

    def run(self, max_ticks: int | None = None):
        threading.Thread(target=self._acceptor, daemon=True).start()
        ticks = 0
        try:
            while not self.stop_flag.is_set():
                start = time.perf_counter()
                while True:
                    try:
                        client, text = self.inbox.get_nowait()
                    except queue.Empty:
                        break
                    try:
                        msg = json.loads(text)
                    except json.JSONDecodeError as exc:
                        self._send(client, json.dumps({
                            "type": "error", "schema": WIRE_SCHEMA, "code": "bad_json",
                            "text": f"malformed JSON at byte {exc.pos}"}))
                        continue
                    for reply in handle_message(self.scene, msg):
                        self._send(client, json.dumps(reply))
                frame, error = tick(self.scene)
                if error is not None:
                    self.broadcast(json.dumps(error))
                self.broadcast(json.dumps(frame))
                ticks += 1
                if max_ticks is not None and ticks >= max_ticks:
                    return
                if self.realtime:
                    elapsed = time.perf_counter() - start
                    time.sleep(max(0.0, self.scene.tick_dt - elapsed))
        finally:
            self.stop()

    def stop(self):
        self.stop_flag.set()
        try:
            self.listener.close()
        except OSError:
            pass
        with self.clients_lock:
            for client in self.clients:
                client.close()
            self.clients.clear()
