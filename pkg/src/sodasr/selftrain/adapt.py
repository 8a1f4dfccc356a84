"""One adaptation step and the full adaptation run with logging and checkpointing."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np

from ..data import evaluate_model, extract_patches
from ..errors import NonFiniteError
from ..numerics import Tensor, load_checkpoint, save_checkpoint
from .losses import LossTerms, loss_high_D, loss_high_G, loss_low, loss_perceptual, loss_rec, total_loss
from .state import AdaptHyperParams, AdaptRngs, TeacherStudentState, ema_update
from .uncertainty import estimate_uncertainty

LOG_COLUMNS = ("iteration", "l_rec", "l_per", "l_low", "l_highG", "l_highD", "cof_mean", "wat_used",
               "psnr_y_val", "ssim_val", "l_total")
LOSS_COLUMNS = ("l_rec", "l_per", "l_low", "l_highG", "l_highD", "cof_mean", "wat_used", "l_total")


@dataclass
class StepRecord:
    iteration: int
    l_rec: float
    l_per: float
    l_low: float
    l_highG: float
    l_highD: float
    l_total: float
    cof_mean: float
    wat_used: bool


def _check_grads(named_params) -> None:
    for name, p in named_params:
        if p.grad is not None and not np.all(np.isfinite(p.grad)):
            raise NonFiniteError(f"gradient of {name} is not finite")


def route_through_wat(rng: np.random.Generator, probability: float) -> bool:
    """Bernoulli(``probability``) routing decision; always consumes one draw."""
    return bool(rng.random() < probability)


def adapt_step(state: TeacherStudentState, x_t, hp: AdaptHyperParams, rngs: AdaptRngs) -> StepRecord:
    """One teacher/student update on a batch of unlabeled target LR patches.

    The teacher produces an averaged pseudo-label and a confidence map, the
    student (optionally routed through the WAT) is updated on the combined
    objective, the discriminator takes one step on the high bands, and the
    teacher follows the student by EMA.
    """
    dtype = state.student.head.weight.dtype
    x = np.asarray(x_t.data if isinstance(x_t, Tensor) else x_t, dtype=dtype)

    est = estimate_uncertainty(state.teacher, x, hp.n_passes, hp.tau, rngs.gumbel, hp.alpha, hp.beta,
                               ensemble=hp.ensemble)
    if not hp.use_uncertainty:
        est = replace(est, cof=np.ones_like(est.cof))

    use_wat = route_through_wat(rngs.routing, hp.wat_probability)
    student = state.student
    student.set_norm_mode("softmax")
    student.train()
    feats = student.extract_features(Tensor(x))
    if use_wat:
        feats = state.wat(feats)
    sr = student.reconstruct(feats, x)

    terms = LossTerms(
        rec=loss_rec(sr, est),
        per=loss_perceptual(sr, est.y_mean, state.extractor),
        low=loss_low(x, sr, hp.l1, hp.l2, compensate=hp.compensate_gain),
        high_g=loss_high_G(sr, state.discriminator, hp.l2, hp.l1 if hp.compensate_gain else None),
    )
    total = total_loss(terms, hp.lambda1, hp.lambda2, hp.lambda3)
    state.opt_generator.zero_grad()
    state.discriminator.zero_grad()
    total.backward()
    _check_grads(zip(state.opt_generator.names, state.opt_generator.params))
    state.opt_generator.step()

    # the generator pass left gradients on the discriminator; discard them
    state.opt_discriminator.zero_grad()
    l_d = loss_high_D(x, sr, state.discriminator, hp.l1, hp.l2, compensate=hp.compensate_gain)
    if not np.isfinite(l_d.item()):
        raise NonFiniteError(f"loss term l_highD is not finite ({l_d.item()!r})")
    l_d.backward()
    _check_grads(zip(state.opt_discriminator.names, state.opt_discriminator.params))
    state.opt_discriminator.step()

    ema_update(state)
    state.iteration += 1
    return StepRecord(
        iteration=state.iteration,
        l_rec=float(terms.rec.item()),
        l_per=float(terms.per.item()),
        l_low=float(terms.low.item()),
        l_highG=float(terms.high_g.item()),
        l_highD=float(l_d.item()),
        l_total=float(total.item()),
        cof_mean=float(est.cof.mean()),
        wat_used=use_wat,
    )


@dataclass
class TargetData:
    train_lr: list  # unlabeled target LR images
    val_pairs: list  # (lr, hr) pairs used for model selection

    @classmethod
    def from_dataset(cls, dataset) -> TargetData:
        return cls(dataset.lr_images("target", "train"), dataset.pairs("target", "val"))


@dataclass
class AdaptResult:
    rows: list[dict] = field(default_factory=list)
    best_psnr: float = -math.inf
    best_iteration: int = 0
    checkpoint_path: Path | None = None
    log_path: Path | None = None
    state: TeacherStudentState | None = None


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _summarize(iteration: int, records: list[StepRecord]) -> dict:
    row = {k: None for k in LOG_COLUMNS}
    row["iteration"] = iteration
    if records:
        for k in LOSS_COLUMNS:
            row[k] = float(np.mean([float(getattr(r, k)) for r in records]))
    return row


def hyperparam_metadata(hp: AdaptHyperParams) -> dict[str, str]:
    return {f.name: str(getattr(hp, f.name)) for f in fields(hp)}


def adapt_run(source, target: TargetData, hp: AdaptHyperParams, out_dir, seed: int = 0, dtype=np.float32,
              metadata: dict | None = None, progress: Callable[[dict], None] | None = None,
              checkpoint_name: str = "adapted.ckpt", log_name: str = "adapt_log.csv") -> AdaptResult:
    """Adapt a source checkpoint to the unlabeled target domain.

    ``source`` is a checkpoint path or a loaded tensor dict.  Every
    ``eval_interval`` iterations (and at the start and the end) the selected
    model is evaluated on the target validation pairs without the WAT, one
    CSV row is written with the losses averaged over the interval, and the
    full state is checkpointed whenever validation PSNR-Y improves.
    """
    source_state = load_checkpoint(source) if isinstance(source, (str, os.PathLike)) else dict(source)
    rngs = AdaptRngs.from_seed(seed)
    state = TeacherStudentState.from_source(source_state, hp, rngs.init, dtype=dtype)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = AdaptResult(checkpoint_path=out_dir / checkpoint_name, log_path=out_dir / log_name, state=state)

    meta = {"seed": str(seed), "dtype": np.dtype(dtype).name}
    meta.update(hyperparam_metadata(hp))
    meta.update({k: str(v) for k, v in (metadata or {}).items()})

    with open(result.log_path, "w", newline="") as fh:
        for k, v in meta.items():
            fh.write(f"# {k} = {v}\n")
        writer = csv.writer(fh)
        writer.writerow(LOG_COLUMNS)

        def evaluate_and_log(records):
            model = state.student if hp.eval_model == "student" else state.teacher
            psnr, ssim_v = evaluate_model(model, target.val_pairs)
            row = _summarize(state.iteration, records)
            row["psnr_y_val"], row["ssim_val"] = psnr, ssim_v
            writer.writerow([_fmt(row[k]) for k in LOG_COLUMNS])
            fh.flush()
            result.rows.append(row)
            if psnr > result.best_psnr:
                result.best_psnr, result.best_iteration = psnr, state.iteration
                save_checkpoint(result.checkpoint_path, state.state_dict())
            if progress is not None:
                progress(row)

        evaluate_and_log([])
        pending: list[StepRecord] = []
        for it in range(hp.iterations):
            batch = extract_patches(target.train_lr, hp.patch, hp.scale, rngs.data, hp.batch)
            pending.append(adapt_step(state, batch.lr, hp, rngs))
            if (it + 1) % hp.eval_interval == 0 or it + 1 == hp.iterations:
                evaluate_and_log(pending)
                pending = []
    return result


def read_log(path) -> tuple[dict[str, str], list[dict]]:
    """Metadata and rows (floats, None for blank fields) of an adaptation CSV."""
    meta, lines = {}, []
    with open(path) as fh:
        for line in fh:
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                meta[key.strip()] = value.strip()
            else:
                lines.append(line)
    rows = []
    for rec in csv.DictReader(lines):
        rows.append({k: (float(v) if v != "" else None) for k, v in rec.items()})
    return meta, rows
