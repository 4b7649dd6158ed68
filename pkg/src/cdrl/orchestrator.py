"""Asynchronous collaborative actor-critic training.

Workers share a :class:`GlobalStore` (student parameters, alignment
parameters and the global step counter). Each worker repeatedly

1. synchronizes its local copy of the student,
2. plays up to ``t_max`` steps, recording teacher and student logits once
   the global step reaches ``T1``,
3. applies GAE actor-critic gradients,
4. from ``T1`` on, hands (teacher, student) logit pairs to the alignment
   trainer (worker 0),
5. from ``T2`` on, distills the (aligned) teacher logits into the student.

Workers are generators that yield after every rollout, so the same code runs
under real threads or under a deterministic round-robin scheduler.
"""
from __future__ import annotations

import os
import threading
import time
from collections import deque
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import envs
from .alignment import AlignmentNetwork, alignment_spec, align_train_step
from .checkpoint import checkpoint_load, checkpoint_save
from .diffcore import MlpSpec, ParamSet, init_params, log_softmax
from .exceptions import ConfigError, ShapeError
from .losses import Rollout, actor_critic_grads, deep_kd_loss, gae
from .metrics import MetricsWriter
from .networks import StudentNetwork, TeacherNetwork, pad_or_truncate, sample_action

MODES = (
    "a3c", "kd_only", "kd_gae", "kd_policy_hetero", "kd_distill_hetero",
    "deep_kd_offline", "deep_kd_online", "ca3c",
)


@dataclass(frozen=True)
class ModeTraits:
    actor_critic: bool
    distill_head: Optional[str]  # None, "policy" or "distill"
    target: Optional[str]        # None, "raw", "pad", "align_fixed", "align_online"
    teacher: Optional[str]       # None, "checkpoint", "live"
    hetero: Optional[bool]       # required relation of action dims, None = either


MODE_TRAITS = {
    "a3c": ModeTraits(True, None, None, None, None),
    "kd_only": ModeTraits(False, "policy", "raw", "checkpoint", False),
    "kd_gae": ModeTraits(True, "policy", "raw", "checkpoint", False),
    "kd_policy_hetero": ModeTraits(True, "policy", "pad", "checkpoint", True),
    "kd_distill_hetero": ModeTraits(True, "distill", "pad", "checkpoint", True),
    "deep_kd_offline": ModeTraits(True, "distill", "align_fixed", "checkpoint", None),
    "deep_kd_online": ModeTraits(True, "distill", "align_online", "checkpoint", None),
    "ca3c": ModeTraits(True, "distill", "align_online", "live", None),
}


@dataclass
class WorkerConfig:
    t_max: int = 20
    T_max: int = 300_000
    T1: Optional[int] = None
    T2: Optional[int] = None
    distill_stop: Optional[int] = None
    gamma: float = 0.9
    gae_lambda: float = 1.0
    tau: float = 1.0
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    distill_weight: float = 1.0
    lr: float = 0.02
    max_grad_norm: Optional[float] = 5.0
    lr_distill: float = 0.01
    lr_align: float = 0.001
    align_max_grad_norm: Optional[float] = 20.0
    align_batch: int = 256
    align_steps: int = 4
    align_buffer: int = 4096
    align_after_T2: bool = True
    align_log_every: int = 100
    seed: int = 0

    def validate(self):
        if self.t_max < 1:
            raise ConfigError("t_max must be >= 1")
        if self.T_max < 1:
            raise ConfigError("T_max must be >= 1")
        if not 0 <= self.gamma <= 1:
            raise ConfigError("gamma must be in [0, 1]")
        if not 0 <= self.gae_lambda <= 1:
            raise ConfigError("gae_lambda must be in [0, 1]")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.T1 is not None and self.T2 is not None and not 0 <= self.T1 <= self.T2 <= self.T_max:
            raise ConfigError(f"need 0 <= T1 <= T2 <= T_max, got T1={self.T1} T2={self.T2} T_max={self.T_max}")
        for name in ("lr", "lr_distill", "lr_align", "distill_weight", "entropy_coef", "value_coef"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        for name in ("align_batch", "align_steps", "align_buffer", "align_log_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")


@dataclass
class ExperimentSpec:
    mode: str = "a3c"
    env: str = "catch3"
    teacher_env: Optional[str] = None
    teacher_checkpoint: Optional[str] = None
    align_checkpoint: Optional[str] = None
    workers: int = 8
    teacher_workers: Optional[int] = None
    hidden_width: int = 64
    hidden_layers: int = 2
    align_hidden_width: int = 32
    align_hidden_layers: int = 4
    scheduler: str = "threads"
    strict_store: bool = False
    worker: WorkerConfig = field(default_factory=WorkerConfig)

    @property
    def traits(self) -> ModeTraits:
        return MODE_TRAITS[self.mode]

    @property
    def hidden(self):
        return tuple((self.hidden_width, "relu") for _ in range(self.hidden_layers))

    def resolved(self) -> "ExperimentSpec":
        """Copy with mode-dependent defaults filled in, validated."""
        if self.mode not in MODE_TRAITS:
            raise ConfigError(f"unknown mode {self.mode!r}; choose from {', '.join(MODES)}")
        envs.describe(self.env)
        w = replace(self.worker)
        online = self.traits.target == "align_online"
        if w.T1 is None:
            w.T1 = min(20_000, w.T_max) if online else 0
        if w.T2 is None:
            w.T2 = min(40_000, w.T_max) if online else w.T1
        w.validate()
        spec = replace(self, worker=w)
        if spec.workers < 1:
            raise ConfigError("workers must be >= 1")
        if spec.scheduler not in ("threads", "round_robin"):
            raise ConfigError(f"unknown scheduler {spec.scheduler!r}")
        t = spec.traits
        if t.teacher == "checkpoint" and not spec.teacher_checkpoint:
            raise ConfigError(f"mode {spec.mode} needs teacher_checkpoint")
        if t.teacher == "live":
            if not spec.teacher_env:
                raise ConfigError("mode ca3c needs teacher_env")
            envs.describe(spec.teacher_env)
            if spec.teacher_workers is None:
                spec.teacher_workers = spec.workers
        if t.target == "align_fixed" and not spec.align_checkpoint:
            raise ConfigError(f"mode {spec.mode} needs align_checkpoint")
        if t.teacher == "checkpoint" and spec.teacher_env is None:
            spec.teacher_env = _checkpoint_env(spec.teacher_checkpoint)
        if t.hetero is not None and spec.teacher_env is not None:
            hetero = envs.describe(spec.teacher_env).action_dim != envs.describe(spec.env).action_dim
            if hetero != t.hetero:
                need = "differing" if t.hetero else "equal"
                raise ConfigError(f"mode {spec.mode} needs {need} teacher/student action dims")
        return spec

    def to_dict(self):
        d = asdict(self)
        d.pop("worker")
        d.update(asdict(self.worker))
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        wnames = {f.name for f in fields(WorkerConfig)}
        w = WorkerConfig(**{k: d.pop(k) for k in list(d) if k in wnames})
        return cls(worker=w, **d)


def _checkpoint_env(path):
    try:
        return checkpoint_load(path).env
    except FileNotFoundError:
        raise ConfigError(f"teacher checkpoint {path!r} not found") from None


class StepCounter:
    """Shared monotone counter of environment steps."""

    def __init__(self, value=0):
        self._value = value
        self._lock = threading.Lock()

    @property
    def value(self):
        return self._value

    def increment(self, n=1):
        with self._lock:
            self._value += n
            return self._value


class SharedParams:
    """Parameter vector safe for concurrent snapshot and apply.

    Each layer has its own lock, so a snapshot may mix layers from before and
    after a concurrent apply but never a half-updated layer. ``strict=True``
    uses one lock for the whole vector.
    """

    def __init__(self, params: ParamSet, strict=False):
        self._params = params.copy()
        self.strict = strict
        names = params.layer_names
        if strict:
            lock = threading.Lock()
            self._locks = [(lock, slice(0, params.size))]
        else:
            self._locks = [(threading.Lock(), params.span(n)) for n in names]

    @property
    def layout(self):
        return self._params.layout

    def snapshot(self) -> ParamSet:
        out = self._params.zeros_like()
        for lock, span in self._locks:
            with lock:
                out.data[span] = self._params.data[span]
        return out

    def apply_gradients(self, grads: ParamSet, lr: float):
        if grads.layout != self._params.layout:
            raise ShapeError("gradient layout does not match the stored parameters")
        for lock, span in self._locks:
            with lock:
                self._params.data[span] -= lr * grads.data[span]

    def assign(self, params: ParamSet):
        if params.layout != self._params.layout:
            raise ShapeError("parameter layout does not match the stored parameters")
        for lock, span in self._locks:
            with lock:
                self._params.data[span] = params.data[span]


class GlobalStore:
    """Student parameters, alignment parameters and the step counter ``T``."""

    def __init__(self, student_params: ParamSet, align_params: Optional[ParamSet] = None, strict=False):
        self.student = SharedParams(student_params, strict)
        self.align = SharedParams(align_params, strict) if align_params is not None else None
        self.counter = StepCounter()

    @property
    def T(self):
        return self.counter.value


def snapshot(store: GlobalStore) -> ParamSet:
    return store.student.snapshot()


def apply_gradients(store: GlobalStore, grads: ParamSet, lr: float):
    store.student.apply_gradients(grads, lr)


class LogitPairQueue:
    """Bounded multi-producer single-consumer queue; oldest pairs are dropped on overflow."""

    def __init__(self, capacity=4096):
        self._items = deque(maxlen=capacity)
        self._lock = threading.Lock()
        self.dropped = 0

    def put_many(self, z_alpha, z_beta):
        with self._lock:
            for a, b in zip(z_alpha, z_beta):
                if len(self._items) == self._items.maxlen:
                    self.dropped += 1
                self._items.append((a, b))

    def drain(self):
        with self._lock:
            items = list(self._items)
            self._items.clear()
        return items

    def __len__(self):
        return len(self._items)


class AlignmentTrainer:
    """Online alignment training, owned by a single worker.

    Drained pairs go into a sliding buffer of the most recent
    ``align_buffer`` pairs; each call takes ``align_steps`` minibatch SGD
    steps on it and publishes the result to the store.
    """

    def __init__(self, store: GlobalStore, spec: MlpSpec, cfg: WorkerConfig, queue: LogitPairQueue):
        self.store = store
        self.spec = spec
        self.cfg = cfg
        self.queue = queue
        self.params = store.align.snapshot()
        self.buffer = deque(maxlen=cfg.align_buffer)
        self.rng = np.random.default_rng([cfg.seed, 17])
        self.steps = 0
        self._losses = []
        self.epoch = 0

    def train(self):
        """Train on the buffered pairs; returns an epoch-mean loss when an epoch closes."""
        self.buffer.extend(self.queue.drain())
        if not self.buffer:
            return None
        z_alpha = np.array([p[0] for p in self.buffer])
        z_beta = np.array([p[1] for p in self.buffer])
        n = len(z_alpha)
        for _ in range(self.cfg.align_steps):
            idx = self.rng.integers(0, n, size=min(self.cfg.align_batch, n))
            loss = align_train_step(self.spec, self.params, z_alpha[idx], z_beta[idx], self.cfg.tau,
                                    self.cfg.lr_align, self.cfg.align_max_grad_norm)
            self._losses.append(loss / len(idx))
            self.steps += 1
        self.store.align.assign(self.params)
        if len(self._losses) >= self.cfg.align_log_every:
            mean = float(np.mean(self._losses))
            self._losses = []
            self.epoch += 1
            return mean
        return None


@dataclass
class _Shared:
    spec: ExperimentSpec
    store: GlobalStore
    metrics: Optional[MetricsWriter]
    student_spec: MlpSpec
    env_desc: envs.EnvDescriptor
    role: str = "student"
    teacher: Optional[TeacherNetwork] = None
    teacher_store: Optional[GlobalStore] = None
    teacher_spec: Optional[MlpSpec] = None
    teacher_desc: Optional[envs.EnvDescriptor] = None
    align_spec: Optional[MlpSpec] = None
    queue: Optional[LogitPairQueue] = None
    trainer: Optional[AlignmentTrainer] = None
    traits: ModeTraits = MODE_TRAITS["a3c"]
    t0: float = 0.0
    records: list = field(default_factory=list)
    records_lock: threading.Lock = field(default_factory=threading.Lock)

    def emit(self, record):
        with self.records_lock:
            self.records.append(record)
        if self.metrics is not None:
            self.metrics.write(record)


_ROLE_IDS = {"student": 0, "teacher": 1}


def worker_steps(worker_id: int, sh: _Shared):
    """Generator form of one worker; yields after each rollout."""
    cfg = sh.spec.worker
    traits = sh.traits
    role_id = _ROLE_IDS[sh.role]
    rng = np.random.default_rng([cfg.seed, role_id, worker_id])
    env = envs.make_env(sh.env_desc.name)
    episode = 0
    obs = env.reset(envs.mix_seed(cfg.seed, role_id, worker_id, episode))
    ep_reward = 0.0
    store = sh.store
    net = StudentNetwork(sh.env_desc, params=store.student.snapshot(), spec=sh.student_spec)
    teacher = sh.teacher
    d_beta = sh.env_desc.action_dim
    last_stats = {}
    while store.counter.value < cfg.T_max:
        net.params = store.student.snapshot()
        if sh.teacher_store is not None:
            teacher = TeacherNetwork(sh.teacher_desc, params=sh.teacher_store.student.snapshot(), spec=sh.teacher_spec)
        n = cfg.t_max
        obs_buf = np.empty((n, env.obs_dim))
        act_buf = np.empty(n, dtype=np.int64)
        rew_buf = np.empty(n)
        val_buf = np.empty(n)
        pol_buf = np.empty((n, d_beta))
        tch_buf = np.full((n, teacher.action_dim), np.nan) if teacher is not None else None
        finished = []
        terminal = False
        t = 0
        while t < n:
            out = net.forward(obs)
            a = sample_action(out.policy_logits, rng)
            if teacher is not None and store.counter.value >= cfg.T1:
                tch_buf[t] = teacher.forward(obs).policy_logits
            res = env.step(a)
            obs_buf[t] = obs
            act_buf[t] = a
            rew_buf[t] = res.reward
            val_buf[t] = out.value
            pol_buf[t] = out.policy_logits
            t += 1
            step_T = store.counter.increment()
            ep_reward += res.reward
            obs = res.observation
            if res.terminal:
                finished.append((step_T, episode, ep_reward))
                episode += 1
                ep_reward = 0.0
                obs = env.reset(envs.mix_seed(cfg.seed, role_id, worker_id, episode))
                terminal = True
                break
        bootstrap = 0.0 if terminal else net.forward(obs).value
        rollout = Rollout(
            obs_buf[:t], act_buf[:t], rew_buf[:t], val_buf[:t], pol_buf[:t],
            teacher_logits=None if tch_buf is None else tch_buf[:t],
            bootstrap_value=bootstrap, terminal=terminal,
        )
        stats = {"policy_loss": None, "value_loss": None, "entropy": None, "distill_loss": None, "align_loss": None}
        if traits.actor_critic:
            adv_ret = gae(rollout.rewards, rollout.values, bootstrap, cfg.gamma, cfg.gae_lambda)
            grads, ac = actor_critic_grads(rollout, net, adv_ret, cfg.entropy_coef, cfg.value_coef)
            store.student.apply_gradients(clip_grad_norm(grads, cfg.max_grad_norm), cfg.lr)
            stats.update(ac)
        T = store.counter.value
        mask = rollout.teacher_mask()
        if traits.target == "align_online" and T >= cfg.T1 and mask.any():
            if cfg.align_after_T2 or T < cfg.T2:
                sh.queue.put_many(rollout.teacher_logits[mask], rollout.policy_logits[mask])
                if sh.trainer is not None and worker_id == 0:
                    epoch_loss = sh.trainer.train()
                    if epoch_loss is not None:
                        stats["align_loss"] = epoch_loss
                        sh.emit(_record(sh, "align", T, worker_id, align_epoch=sh.trainer.epoch, align_loss=epoch_loss))
        distilling = traits.distill_head is not None and T >= cfg.T2 and (cfg.distill_stop is None or T < cfg.distill_stop)
        if distilling and mask.any():
            z_alpha = rollout.teacher_logits[mask]
            if traits.target == "raw":
                target = z_alpha
            elif traits.target == "pad":
                target = pad_or_truncate(z_alpha, d_beta)
            else:
                align = AlignmentNetwork.from_params(sh.align_spec, sh.store.align.snapshot())
                target = align.transform(z_alpha)
            loss, grads = deep_kd_loss(net, rollout.obs[mask], target, cfg.tau, head=traits.distill_head)
            grads = clip_grad_norm(grads, cfg.max_grad_norm)
            store.student.apply_gradients(grads, cfg.lr_distill * cfg.distill_weight)
            stats["distill_loss"] = loss
        if stats["policy_loss"] is None and traits.actor_critic is False:
            stats["entropy"] = float(_mean_entropy(rollout.policy_logits))
        last_stats = stats
        for step_T, ep_idx, reward in finished:
            sh.emit(_record(sh, "episode", step_T, worker_id, episode_index=ep_idx, episode_reward=reward, **last_stats))
        yield t


def clip_grad_norm(grads: ParamSet, max_norm):
    """Rescale ``grads`` in place so its global L2 norm is at most ``max_norm``."""
    if max_norm is None:
        return grads
    norm = float(np.sqrt(grads.data @ grads.data))
    if norm > max_norm:
        grads.data *= max_norm / norm
    return grads


def _mean_entropy(logits):
    logp = log_softmax(logits)
    return -(np.exp(logp) * logp).sum(axis=1).mean()


def _record(sh: _Shared, kind, step, worker_id, **extra):
    rec = {
        "kind": kind,
        "role": sh.role,
        "wall_time_s": round(time.perf_counter() - sh.t0, 6),
        "global_step": int(step),
        "worker_id": int(worker_id),
    }
    for k, v in extra.items():
        rec[k] = None if v is None else (float(v) if isinstance(v, (float, np.floating)) else v)
    return rec


def worker_loop(worker_id: int, sh: _Shared):
    """Run one worker until the global step budget is exhausted."""
    for _ in worker_steps(worker_id, sh):
        pass


def _run_generators(gens, scheduler):
    if scheduler == "round_robin":
        active = list(gens)
        while active:
            still = []
            for g in active:
                try:
                    next(g)
                    still.append(g)
                except StopIteration:
                    pass
            active = still
        return
    errors = []

    def target(g):
        try:
            for _ in g:
                pass
        except BaseException as exc:  # surfaced after join
            errors.append(exc)

    threads = [threading.Thread(target=target, args=(g,), daemon=True) for g in gens]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    if errors:
        raise errors[0]


@dataclass
class RunResult:
    spec: ExperimentSpec
    student: StudentNetwork
    records: list
    final_step: int
    run_dir: Optional[Path] = None
    teacher: Optional[TeacherNetwork] = None
    alignment: Optional[AlignmentNetwork] = None

    def episode_rewards(self, role="student"):
        return np.array([r["episode_reward"] for r in self.records if r["kind"] == "episode" and r["role"] == role])

    def episode_steps(self, role="student"):
        return np.array([r["global_step"] for r in self.records if r["kind"] == "episode" and r["role"] == role])

    def final_reward(self, n=100, role="student"):
        return last_n_mean(self.episode_rewards(role), n)

    def steps_to_reach(self, threshold, window=100, role="student"):
        return steps_to_threshold(self.episode_steps(role), self.episode_rewards(role), threshold, window)


def last_n_mean(rewards, n=100):
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.size == 0:
        return float("nan")
    return float(rewards[-n:].mean())


def steps_to_threshold(steps, rewards, threshold, window=100):
    """First global step at which the trailing ``window``-episode mean reaches ``threshold``.

    Returns ``None`` when it never does.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.size < window:
        return None
    c = np.concatenate([[0.0], np.cumsum(rewards)])
    means = (c[window:] - c[:-window]) / window
    hit = np.nonzero(means >= threshold)[0]
    if hit.size == 0:
        return None
    return int(steps[hit[0] + window - 1])


def _load_teacher(path) -> TeacherNetwork:
    ck = checkpoint_load(path)
    return TeacherNetwork(ck.env, params=ck.params, spec=ck.spec)


def run_experiment(spec: ExperimentSpec, out_dir=None, teacher: Optional[TeacherNetwork] = None,
                   alignment: Optional[AlignmentNetwork] = None, metrics_path=None) -> RunResult:
    """Train according to ``spec``; optionally write a run directory.

    ``teacher`` and ``alignment`` may be passed in memory instead of via
    checkpoint paths. The run directory holds ``config.resolved``,
    ``metrics.jsonl`` and ``checkpoints/``.
    """
    from .config import dump_config

    if teacher is not None and spec.teacher_checkpoint is None and spec.traits.teacher == "checkpoint":
        spec = replace(spec, teacher_checkpoint="<memory>", teacher_env=teacher.env.name)
    if alignment is not None and spec.align_checkpoint is None:
        spec = replace(spec, align_checkpoint="<memory>")
    spec = spec.resolved()
    cfg = spec.worker
    traits = spec.traits
    desc = envs.describe(spec.env)
    student_spec = StudentNetwork.build_spec(desc, spec.hidden)
    init = init_params(student_spec, np.random.default_rng([cfg.seed, 7]))

    if traits.teacher == "checkpoint" and teacher is None:
        teacher = _load_teacher(spec.teacher_checkpoint)
    if teacher is not None and teacher.spec.input_dim != desc.obs_dim:
        raise ConfigError("teacher cannot read the student environment's observations")
    if traits.teacher is None:
        teacher = None

    align_spec = None
    align_params = None
    if traits.target == "align_fixed":
        if alignment is None:
            ck = checkpoint_load(spec.align_checkpoint)
            alignment = AlignmentNetwork.from_params(ck.spec, ck.params)
        align_spec, align_params = alignment.spec_, alignment.params_
    elif traits.target == "align_online":
        d_alpha = envs.describe(spec.teacher_env).action_dim if traits.teacher == "live" else teacher.action_dim
        align_spec = alignment_spec(d_alpha, desc.action_dim, spec.align_hidden_width, spec.align_hidden_layers)
        align_params = init_params(align_spec, np.random.default_rng([cfg.seed, 11]))
    if align_spec is not None:
        n_out = align_spec.head_dims["out"]
        d_alpha = envs.describe(spec.teacher_env).action_dim
        if align_spec.input_dim != d_alpha or n_out != desc.action_dim:
            raise ConfigError("alignment network dims do not match teacher/student action spaces")

    run_dir = None
    metrics = None
    if out_dir is not None:
        run_dir = Path(out_dir)
        (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
        (run_dir / "config.resolved").write_text(dump_config(spec))
        metrics = MetricsWriter(metrics_path or run_dir / "metrics.jsonl")
    elif metrics_path is not None:
        metrics = MetricsWriter(metrics_path)

    store = GlobalStore(init, align_params, strict=spec.strict_store)
    t0 = time.perf_counter()
    shared = _Shared(spec, store, metrics, student_spec, desc, teacher=teacher, traits=traits,
                     align_spec=align_spec, t0=t0)
    gens = []
    teacher_shared = None
    if traits.teacher == "live":
        tdesc = envs.describe(spec.teacher_env)
        tspec = StudentNetwork.build_spec(tdesc, spec.hidden)
        tstore = GlobalStore(init_params(tspec, np.random.default_rng([cfg.seed, 13])), strict=spec.strict_store)
        teacher_shared = _Shared(replace(spec, worker=cfg), tstore, metrics, tspec, tdesc, role="teacher",
                                 traits=MODE_TRAITS["a3c"], t0=t0, records=shared.records,
                                 records_lock=shared.records_lock)
        shared.teacher_store = tstore
        shared.teacher_spec = tspec
        shared.teacher_desc = tdesc
        shared.teacher = None
        gens += [worker_steps(i, teacher_shared) for i in range(spec.teacher_workers)]
    if traits.target == "align_online":
        shared.queue = LogitPairQueue()
        shared.trainer = AlignmentTrainer(store, align_spec, cfg, shared.queue)
    if traits.teacher == "live":
        # student workers need a teacher object for buffer sizing before the first sync
        shared.teacher = TeacherNetwork(shared.teacher_desc, params=tstore.student.snapshot(), spec=shared.teacher_spec)
    student_gens = [worker_steps(i, shared) for i in range(spec.workers)]
    # interleave so round-robin alternates teacher and student workers
    merged = []
    for i in range(max(len(gens), len(student_gens))):
        if i < len(gens):
            merged.append(gens[i])
        if i < len(student_gens):
            merged.append(student_gens[i])
    try:
        _run_generators(merged, spec.scheduler)
    finally:
        if metrics is not None:
            metrics.close()

    final_T = store.counter.value
    student = StudentNetwork(desc, params=store.student.snapshot(), spec=student_spec)
    trained_teacher = None
    if teacher_shared is not None:
        trained_teacher = TeacherNetwork(shared.teacher_desc, params=teacher_shared.store.student.snapshot(),
                                         spec=shared.teacher_spec)
    align_out = None
    if align_spec is not None:
        align_out = AlignmentNetwork.from_params(align_spec, store.align.snapshot())
    if run_dir is not None:
        ck = run_dir / "checkpoints"
        checkpoint_save(ck / f"student-{final_T}.ckpt", student_spec, student.params, env=desc.name, kind="student")
        if trained_teacher is not None:
            checkpoint_save(ck / f"teacher-{teacher_shared.store.counter.value}.ckpt", trained_teacher.spec,
                            trained_teacher.params, env=trained_teacher.env.name, kind="teacher")
        if align_out is not None:
            checkpoint_save(ck / f"align-{final_T}.ckpt", align_spec, align_out.params_, env=None, kind="align")
    return RunResult(spec, student, list(shared.records), final_T, run_dir, trained_teacher or teacher, align_out)


def default_workers(requested: Optional[int] = None) -> int:
    env = os.environ.get("CDRL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"CDRL_THREADS must be an integer, got {env!r}") from None
    return requested if requested is not None else 8

