"""WebSocket session service: one participant channel driving one session.

The service translates protocol messages into engine events and engine
actions into protocol messages, owns the timers (demonstration length,
response window, feedback pauses), and heart-beats a state message every
second.  If the participant disconnects mid-window the remaining window
time is frozen and resumes when they rejoin; messages emitted while
disconnected are buffered and flushed on rejoin.

Server to client message types: cue, demonstrate, feedback, state,
game_prompt, error.  Client to server: join, strike, mode_select (mode 0
asks to finish gameplay), emotion_answer, rating.
"""

from __future__ import annotations

import asyncio
import json
from dataclasses import dataclass, field

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from .instrument import parse_hex_note
from .session import (
    Begin,
    CueIssued,
    DemonstrationDone,
    EmotionAnswer,
    FeedbackDone,
    GameplayDone,
    IllegalEvent,
    ModeSelected,
    Rating,
    SessionEngine,
    SessionPlan,
    StrikeEvent,
    WindowElapsed,
)

HEARTBEAT_S = 1.0
FEEDBACK_PAUSE_S = 1.0
RING_OUT_S = 0.5


class SessionService:
    def __init__(self, plan: SessionPlan, seed: int, imitator=None, time_scale: float = 1.0):
        self.plan = plan
        self.engine = SessionEngine(plan, seed, imitator=imitator)
        self.time_scale = time_scale
        self.socket: WebSocket | None = None
        self.participant: str | None = None
        self.started = False
        self.origin: float | None = None
        self.buffer: list[dict] = []
        self.pending_cue_text: str | None = None
        self.window_task: asyncio.Task | None = None
        self.window_remaining_s: float | None = None
        self.window_seconds: float | None = None
        self.heartbeat_task: asyncio.Task | None = None

    # -- clock ----------------------------------------------------------

    def now(self) -> float:
        loop = asyncio.get_event_loop()
        if self.origin is None:
            self.origin = loop.time()
        return (loop.time() - self.origin) / self.time_scale

    async def sleep(self, virtual_s: float) -> None:
        await asyncio.sleep(virtual_s * self.time_scale)

    # -- transport ------------------------------------------------------

    async def send(self, type_: str, **body) -> None:
        msg = {"type": type_, "body": body}
        if self.socket is None:
            self.buffer.append(msg)
            return
        try:
            await self.socket.send_text(json.dumps(msg, sort_keys=True))
        except Exception:
            self.buffer.append(msg)

    async def handle(self, websocket: WebSocket) -> None:
        await websocket.accept()
        if self.socket is not None:
            await websocket.send_text(json.dumps(
                {"type": "error", "body": {"message": "session already has a participant"}}
            ))
            await websocket.close()
            return
        try:
            await self._serve_connection(websocket)
        except WebSocketDisconnect:
            pass
        finally:
            if self.socket is websocket:
                self.socket = None
                self._pause_window()

    async def _serve_connection(self, websocket: WebSocket) -> None:
        while True:
            raw = await websocket.receive_text()
            try:
                msg = json.loads(raw)
                mtype = msg.get("type")
                body = msg.get("body", {})
            except (json.JSONDecodeError, AttributeError):
                await websocket.send_text(json.dumps(
                    {"type": "error", "body": {"message": "malformed frame"}}
                ))
                continue
            if self.socket is None:
                if mtype != "join":
                    await websocket.send_text(json.dumps(
                        {"type": "error", "body": {"message": "join first"}}
                    ))
                    continue
                await self._on_join(websocket, body)
                continue
            await self._on_message(mtype, body)

    async def _on_join(self, websocket: WebSocket, body: dict) -> None:
        self.socket = websocket
        self.participant = str(body.get("participant_id", "anonymous"))
        for msg in self.buffer:
            await websocket.send_text(json.dumps(msg, sort_keys=True))
        self.buffer.clear()
        if not self.started:
            self.started = True
            self.heartbeat_task = asyncio.create_task(self._heartbeat())
            await self.dispatch(self.engine.advance(Begin(t_s=self.now())))
        else:
            self._resume_window()
        await self.send_state()

    async def _on_message(self, mtype: str, body: dict) -> None:
        try:
            if mtype == "strike":
                note = parse_hex_note(str(body.get("note", "")))
                await self.dispatch(self.engine.advance(StrikeEvent(t_s=self.now(), note=note)))
            elif mtype == "mode_select":
                mode = int(body.get("mode", -1))
                event = GameplayDone(t_s=self.now()) if mode == 0 else ModeSelected(
                    t_s=self.now(), mode=mode)
                await self.dispatch(self.engine.advance(event))
            elif mtype == "emotion_answer":
                await self.dispatch(self.engine.advance(
                    EmotionAnswer(t_s=self.now(), text=str(body.get("text", "")))))
            elif mtype == "rating":
                await self.dispatch(self.engine.advance(
                    Rating(t_s=self.now(), stars=int(body.get("stars", 0)))))
            elif mtype == "join":
                await self.send("error", message="already joined")
            else:
                await self.send("error", message=f"unknown message type {mtype!r}")
        except (IllegalEvent, ValueError) as exc:
            await self.send("error", message=str(exc))

    # -- engine action fan-out -------------------------------------------

    async def dispatch(self, actions) -> None:
        queue = list(actions)
        while queue:
            action = queue.pop(0)
            extra = await self._apply(action)
            if extra:
                queue.extend(extra)

    async def _apply(self, action):
        body = action.body
        if action.type == "demonstrate":
            await self.send("demonstrate", **body)
            asyncio.create_task(self._demo_timer(body))
        elif action.type == "verbal_cue":
            self.pending_cue_text = body["text"]
        elif action.type == "eye_flash":
            # acknowledge the cue immediately; the engine then opens the window
            return self.engine.advance(CueIssued(t_s=self.now()))
        elif action.type == "open_response_window":
            await self.send("cue", text=self.pending_cue_text or "",
                            eye_flash=True, window_s=body["seconds"])
            self.pending_cue_text = None
            self._start_window(float(body["seconds"]))
        elif action.type == "feedback":
            await self.send("feedback", **body)
            asyncio.create_task(self._feedback_timer())
        elif action.type == "ask_emotion":
            await self.send("game_prompt", kind="emotion", prompt=body["prompt"])
        elif action.type == "ask_rating":
            await self.send("game_prompt", kind="rating", prompt=body["prompt"])
        elif action.type == "game_prompt":
            await self.send("game_prompt", kind="mode_select", **body)
        elif action.type == "robot_imitation":
            await self.send("demonstrate", melody=body["played"], imitation=True,
                            heard=body["heard"])
        elif action.type == "turn_graded":
            await self.send_state(turn_grade=body)
        elif action.type in ("phase_started", "extra_practice"):
            await self.send_state(note=action.type, detail=body)
        elif action.type == "session_done":
            await self.send_state(summary=body["summary"])
        elif action.type == "error":
            await self.send("error", **body)
        return None

    async def _demo_timer(self, body: dict) -> None:
        melody = body.get("melody", "")
        tempo = float(body.get("tempo_bpm", 100.0))
        duration = len(melody) * 60.0 / tempo + RING_OUT_S
        await self.sleep(duration)
        if body.get("imitation"):
            return  # imitation playback needs no acknowledgment
        try:
            await self.dispatch(self.engine.advance(DemonstrationDone(t_s=self.now())))
        except IllegalEvent:
            pass

    async def _feedback_timer(self) -> None:
        await self.sleep(FEEDBACK_PAUSE_S)
        try:
            await self.dispatch(self.engine.advance(FeedbackDone(t_s=self.now())))
        except IllegalEvent:
            pass

    # -- response window --------------------------------------------------

    def _start_window(self, seconds: float) -> None:
        self.window_seconds = seconds
        self.window_remaining_s = seconds
        self._schedule_window(seconds)

    def _schedule_window(self, seconds: float) -> None:
        self.window_deadline = self.now() + seconds
        self.window_task = asyncio.create_task(self._window_timer(seconds))

    async def _window_timer(self, seconds: float) -> None:
        await self.sleep(seconds)
        self.window_task = None
        self.window_remaining_s = None
        try:
            await self.dispatch(self.engine.advance(WindowElapsed(t_s=self.now())))
        except IllegalEvent:
            pass

    def _pause_window(self) -> None:
        if self.window_task is not None and not self.window_task.done():
            self.window_task.cancel()
            self.window_task = None
            self.window_remaining_s = max(0.0, self.window_deadline - self.now())

    def _resume_window(self) -> None:
        if self.window_remaining_s is not None and self.window_task is None:
            self._schedule_window(self.window_remaining_s)

    # -- state -------------------------------------------------------------

    async def send_state(self, **extras) -> None:
        st = self.engine.state
        remaining = None
        if self.window_task is not None:
            remaining = max(0.0, round(self.window_deadline - self.now(), 3))
        elif self.window_remaining_s is not None:
            remaining = round(self.window_remaining_s, 3)
        body = {
            "phase": st.phase.value if st.phase else ("done" if st.done else "idle"),
            "stage": st.stage,
            "window_remaining_s": remaining,
            "modes_played": sorted(st.modes_played),
            "done": st.done,
        }
        body.update(extras)
        await self.send("state", **body)

    async def _heartbeat(self) -> None:
        while not self.engine.state.done:
            await self.sleep(HEARTBEAT_S)
            await self.send_state()


def create_app(plan: SessionPlan, seed: int, imitator=None, time_scale: float = 1.0) -> FastAPI:
    app = FastAPI(title="melodica session service")
    service = SessionService(plan, seed, imitator=imitator, time_scale=time_scale)
    app.state.service = service

    @app.websocket("/ws")
    async def websocket_endpoint(websocket: WebSocket):
        await service.handle(websocket)

    @app.get("/health")
    async def health():
        return {"ok": True, "session": plan.describe(), "done": service.engine.state.done}

    return app
