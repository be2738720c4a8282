"""Two-stage training orchestration.

Stage 1 trains the full generation stack (denoiser, dialog embedding,
feature extractor, text encoder) on the denoising objective with
character and dialog conditioning. Stage 2 freezes all of that and
trains only the feature adapter on the combined special-token / feature
/ denoising loss, verifying by section hash that stage-1 weights never
move.

All randomness flows from two explicit streams seeded by the config: a
numpy generator for data-side draws (batch order, source sampling,
caption dropout) and a torch generator for noise and timesteps, so equal
seeds reproduce loss curves exactly.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image

from panelforge.data.annotations import Corpus, PageAnnotation
from panelforge.data.bucketing import PanelRef, bucket_batches
from panelforge.data.sampling import cap_characters, crop_character, sample_training_pair
from panelforge.models.adapter import AdapterBatch, adapter_loss
from panelforge.models.codec import pil_to_tensor
from panelforge.models.dialog_layout import build_dialog_mask
from panelforge.models.generator import PanelGeneratorModel, build_model, open_slot_mask
from panelforge.models.layout_attention import build_attention_mask
from panelforge.training.checkpoint import CheckpointArchive, CheckpointError
from panelforge.training.config import TrainConfig

logger = logging.getLogger(__name__)

STAGE1_SECTIONS = ("denoiser", "dialog-embedding", "encoders", "resampler", "text-encoder")


class _PageImageCache:
    """Tiny LRU for decoded page images; corpora are immutable."""

    def __init__(self, root: Path, limit: int = 32):
        self.root = root
        self.limit = limit
        self._cache: dict[str, Image.Image] = {}

    def get(self, page: PageAnnotation) -> Image.Image:
        img = self._cache.get(page.page_id)
        if img is None:
            img = Image.open(self.root / page.image_path).convert("L")
            if len(self._cache) >= self.limit:
                self._cache.pop(next(iter(self._cache)))
            self._cache[page.page_id] = img
        return img


@dataclass
class _PreparedSample:
    caption: str
    crops: list[torch.Tensor]
    char_boxes_local: list
    dialog_boxes_local: list
    panel_size: tuple[int, int]
    target: torch.Tensor  # (1, bh, bw) pixel tensor


def _prepare_sample(
    model: PanelGeneratorModel,
    cache: _PageImageCache,
    page: PageAnnotation,
    panel_index: int,
    bucket_wh: tuple[int, int],
    cfg: TrainConfig,
    rng: np.random.Generator,
    drop_conditioning: bool = False,
) -> _PreparedSample:
    panel = cap_characters(page.panels[panel_index], model.config.n_c_cap)
    page_img = cache.get(page)
    bw, bh = bucket_wh
    target = pil_to_tensor(
        page_img.crop((panel.bbox.x0, panel.bbox.y0, panel.bbox.x1, panel.bbox.y1)), (bw, bh)
    )
    if drop_conditioning:
        return _PreparedSample(panel.caption, [], [], [], (panel.bbox.width, panel.bbox.height), target)

    sample = sample_training_pair(page, panel_index, cfg.self_rate, rng, n_c_cap=model.config.n_c_cap)
    crops = [
        pil_to_tensor(crop_character(page_img, src.bbox, model.config.crop_size))
        for src in sample.sources
    ]
    origin_x, origin_y = panel.bbox.x0, panel.bbox.y0
    char_local = [b.shift(-origin_x, -origin_y) for b in sample.character_boxes]
    dialog_local = [b.shift(-origin_x, -origin_y) for b in sample.dialog_boxes]
    caption = panel.caption
    if cfg.caption_dropout > 0 and rng.random() < cfg.caption_dropout:
        caption = ""
    return _PreparedSample(
        caption, crops, char_local, dialog_local, (panel.bbox.width, panel.bbox.height), target
    )


def _batch_condition(model: PanelGeneratorModel, samples: list[_PreparedSample], bucket_wh: tuple[int, int]):
    """Stacked condition tensors for one bucket batch."""
    cfg = model.config
    latent_hw = model.codec.latent_size(bucket_wh)
    resolutions = model.unet.config.attention_resolutions(latent_hw)

    caption_ids = model.text_encoder.tokenizer.encode_batch([s.caption for s in samples])
    tokens = model.extractor.extract_batch([s.crops for s in samples])

    masks = {}
    for res in resolutions:
        per_sample = []
        for s in samples:
            if cfg.fourier_character:
                m = open_slot_mask(len(s.char_boxes_local), cfg.n_c_cap, res[0] * res[1])
            else:
                m = build_attention_mask(s.char_boxes_local, s.panel_size, res, cfg.n_c_cap)
            per_sample.append(m.values)
        masks[res] = torch.stack(per_sample)

    fourier_dialog_emb = None
    dialog_mask = None
    if cfg.fourier_dialog:
        embs = []
        for s in samples:
            boxes = model.normalized_boxes(s.dialog_boxes_local, s.panel_size, max(len(s.dialog_boxes_local), 1))
            if not s.dialog_boxes_local:
                boxes = boxes[:, :0]
            embs.append(model.unet.dialog_fourier_embedding(boxes)[0])
        fourier_dialog_emb = torch.stack(embs)
    else:
        dialog_mask = torch.stack(
            [build_dialog_mask(s.dialog_boxes_local, s.panel_size, latent_hw).values for s in samples]
        )

    if cfg.fourier_character:
        slot_embs = torch.cat(
            [
                model.unet.character_fourier_embedding(
                    model.normalized_boxes(s.char_boxes_local, s.panel_size, cfg.n_c_cap + 1)
                )
                for s in samples
            ]
        )
        from panelforge.models.encoders import CharacterTokens

        tokens = CharacterTokens(
            tokens=tokens.tokens + torch.repeat_interleave(slot_embs, cfg.n_q, dim=1),
            validity=tokens.validity,
            n_q=tokens.n_q,
        )

    z0 = model.codec.encode(torch.stack([s.target for s in samples]))
    return caption_ids, tokens, masks, dialog_mask, fourier_dialog_emb, z0


class LossLog:
    def __init__(self, path: Path | None, columns: list[str], ema_decay: float = 0.95):
        self.path = path
        self.columns = columns
        self.rows: list[dict] = []
        self.ema_decay = ema_decay
        self._ema: float | None = None

    def add(self, **values) -> float:
        loss = values["loss"]
        self._ema = loss if self._ema is None else self.ema_decay * self._ema + (1 - self.ema_decay) * loss
        values["smoothed"] = self._ema
        self.rows.append(values)
        return self._ema

    def write(self) -> None:
        if self.path is None:
            return
        with open(self.path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=self.columns)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: row.get(k, "") for k in self.columns})

    def column(self, name: str) -> list[float]:
        return [row[name] for row in self.rows]


def _cycle_batches(corpus: Corpus, cfg: TrainConfig, epoch_seed: int):
    return bucket_batches(
        corpus,
        cfg.model.buckets,
        max_batch=cfg.batch_max,
        seed=epoch_seed,
        downsample_factor=cfg.model.downsample_factor,
    )


def train_stage1(
    corpus: Corpus,
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
    resume: CheckpointArchive | None = None,
    model: PanelGeneratorModel | None = None,
) -> tuple[CheckpointArchive, PanelGeneratorModel, LossLog]:
    if cfg.stage != 1:
        raise ValueError("train_stage1 requires a stage-1 config")
    cfg.validate()
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)

    model_cfg = cfg.effective_model()
    if model is None:
        model = build_model(model_cfg)
    start_step = 0
    if resume is not None:
        if resume.config_hash != model_cfg.config_hash():
            raise CheckpointError(
                f"resume config hash {resume.config_hash} != current {model_cfg.config_hash()}"
            )
        resume.apply_to_model(model)
        start_step = resume.step

    rng = np.random.default_rng([cfg.seed, start_step])
    gen = torch.Generator().manual_seed(cfg.seed + start_step)
    cache = _PageImageCache(Path(corpus.root))
    params = model.stage1_parameters()
    optimizer = torch.optim.AdamW(params, lr=cfg.learning_rate, betas=(0.9, 0.999), weight_decay=0.01)
    log = LossLog(out / "loss_log.csv" if out else None, ["step", "loss", "smoothed", "lr"])

    model.train()
    step = start_step
    epoch = 0
    batches = iter(_cycle_batches(corpus, cfg, cfg.seed + epoch))
    while step < cfg.steps:
        try:
            bucket_wh, refs = next(batches)
        except StopIteration:
            epoch += 1
            batches = iter(_cycle_batches(corpus, cfg, cfg.seed + epoch))
            continue
        if len(refs) < cfg.batch_min:
            continue
        warmup = step < cfg.warmup_steps
        samples = [
            _prepare_sample(model, cache, r.page, r.panel_index, bucket_wh, cfg, rng, drop_conditioning=warmup)
            for r in refs
        ]
        caption_ids, tokens, masks, dialog_mask, femb, z0 = _batch_condition(model, samples, bucket_wh)
        b = z0.shape[0]
        t = torch.randint(0, model.schedule.t_max, (b,), generator=gen)
        noise = torch.randn(z0.shape, generator=gen)
        z_t = model.schedule.q_sample(z0, t, noise)
        text_tokens = model.text_encoder(caption_ids)
        eps_hat = model.unet(
            z_t, t, text_tokens, tokens.tokens, masks, dialog_mask,
            alpha=cfg.alpha, fourier_dialog_emb=femb,
        )
        loss = torch.nn.functional.mse_loss(eps_hat, noise)
        optimizer.zero_grad()
        loss.backward()
        optimizer.step()
        step += 1
        smoothed = log.add(step=step, loss=float(loss.item()), lr=cfg.learning_rate)
        if cfg.log_every and step % cfg.log_every == 0:
            logger.info("stage1 step %d loss %.4f smoothed %.4f", step, loss.item(), smoothed)
        if out and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            _save_archive(model, cfg, step, gen, rng, out / f"checkpoint_{step:06d}.pfckpt")

    archive = _save_archive(model, cfg, step, gen, rng, out / "checkpoint_final.pfckpt" if out else None)
    log.write()
    if out:
        from panelforge.plotting import save_loss_curve

        save_loss_curve(log, out / "loss_curve.png", title="stage 1 denoising loss")
    return archive, model, log


def _save_archive(
    model: PanelGeneratorModel,
    cfg: TrainConfig,
    step: int,
    gen: torch.Generator,
    rng: np.random.Generator,
    path: Path | None,
) -> CheckpointArchive:
    archive = CheckpointArchive.from_model(
        model,
        config=cfg.flat_dict(),
        step=step,
        config_hash=cfg.effective_model().config_hash(),
        rng={
            "torch": gen.get_state().tolist(),
            "numpy": {
                k: (v if not isinstance(v, dict) else {kk: int(vv) if isinstance(vv, (int, np.integer)) else vv for kk, vv in v.items()})
                for k, v in rng.bit_generator.state.items()
            },
        },
    )
    if path is not None:
        archive.save(path)
        logger.info("wrote checkpoint %s (step %d)", path, step)
    return archive


def build_adapter_batch(
    model: PanelGeneratorModel,
    cache: _PageImageCache,
    refs: list[PanelRef],
    bucket_wh: tuple[int, int],
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> AdapterBatch:
    """Stage-2 sample: caption + source features -> target features + latent."""
    samples = []
    target_crop_lists = []
    for ref in refs:
        page, idx = ref.page, ref.panel_index
        prepared = _prepare_sample(model, cache, page, idx, bucket_wh, cfg, rng)
        samples.append(prepared)
        panel = cap_characters(page.panels[idx], model.config.n_c_cap)
        page_img = cache.get(page)
        target_crop_lists.append(
            [
                pil_to_tensor(crop_character(page_img, inst.bbox, model.config.crop_size))
                for inst in panel.characters
            ]
        )
    caption_ids, source_tokens, masks, dialog_mask, femb, z0 = _batch_condition(model, samples, bucket_wh)
    with torch.no_grad():
        target_tokens = model.extractor.extract_batch(target_crop_lists)
    return AdapterBatch(
        caption_ids=caption_ids,
        source_tokens=source_tokens,
        target_tokens=target_tokens,
        z0=z0,
        masks=masks,
        dialog_mask=dialog_mask,
        fourier_dialog_emb=femb,
    )


def train_stage2(
    corpus: Corpus,
    stage1_ckpt: CheckpointArchive,
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
) -> tuple[CheckpointArchive, PanelGeneratorModel, LossLog]:
    if cfg.stage != 2:
        raise ValueError("train_stage2 requires a stage-2 config")
    cfg.validate()  # rejects no_adapter at stage 2
    out = Path(out_dir) if out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)

    model_cfg = cfg.effective_model()
    model = build_model(model_cfg)
    stage1_ckpt.apply_to_model(model)
    pre_hashes = {name: stage1_ckpt.section_hash(name) for name in STAGE1_SECTIONS}

    for p in model.stage1_parameters():
        p.requires_grad_(False)
    trainables = [p for p in model.adapter.trainable_parameters()]
    optimizer = torch.optim.AdamW(trainables, lr=cfg.learning_rate, betas=(0.9, 0.999), weight_decay=0.01)

    rng = np.random.default_rng([cfg.seed, 2])
    gen = torch.Generator().manual_seed(cfg.seed * 31 + 2)
    cache = _PageImageCache(Path(corpus.root))
    lambdas = (cfg.lambda_lm, cfg.lambda_mse, cfg.lambda_diff)
    log = LossLog(
        out / "loss_log.csv" if out else None,
        ["step", "loss", "lm", "mse", "diff", "smoothed", "lr"],
    )

    model.train()
    step = 0
    epoch = 0
    batches = iter(_cycle_batches(corpus, cfg, cfg.seed + 100 + epoch))
    while step < cfg.steps:
        try:
            bucket_wh, refs = next(batches)
        except StopIteration:
            epoch += 1
            batches = iter(_cycle_batches(corpus, cfg, cfg.seed + 100 + epoch))
            continue
        if len(refs) < cfg.batch_min:
            continue
        batch = build_adapter_batch(model, cache, refs, bucket_wh, cfg, rng)
        total, components = adapter_loss(batch, model.adapter, model, lambdas=lambdas, rng=gen)
        optimizer.zero_grad()
        total.backward()
        optimizer.step()
        step += 1
        smoothed = log.add(
            step=step,
            loss=float(total.item()),
            lm=float(components["lm"].item()),
            mse=float(components["mse"].item()),
            diff=float(components["diff"].item()),
            lr=cfg.learning_rate,
        )
        if cfg.log_every and step % cfg.log_every == 0:
            logger.info("stage2 step %d total %.4f smoothed %.4f", step, total.item(), smoothed)

    post = CheckpointArchive.from_model(model, cfg.flat_dict(), step, model_cfg.config_hash())
    for name in STAGE1_SECTIONS:
        if post.section_hash(name) != pre_hashes[name]:
            raise RuntimeError(f"stage-1 section {name!r} changed during stage 2 (hash drift)")
    if out:
        post.save(out / "checkpoint_final.pfckpt")
        log.write()
        from panelforge.plotting import save_loss_curve

        save_loss_curve(log, out / "loss_curve.png", title="stage 2 adapter loss")
    return post, model, log
