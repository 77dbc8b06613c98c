"""Semi-supervised adversarial autoencoder with a latent classifier head.

Four MLPs share a continuous latent code: encoder (pixels -> z), decoder
(z -> pixels, sigmoid), discriminator (z -> real/fake probability) and a
binary classifier (z -> class probability). Training interleaves four
phases per minibatch cycle: reconstruction (encoder+decoder, MSE),
discriminator (prior vs encoded codes), generator (encoder fools the
discriminator) and supervised classification on labeled examples only.
The prior is a standard normal in every latent dimension.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from morphal.errors import DataFormatError, InputError
from morphal.nn import (
    BCE_CLAMP_EPS,
    AdamState,
    DenseLayer,
    Mlp,
    as_tensor,
    bce_loss,
    mse_loss,
)

CHECKPOINT_VERSION = 1

# Seed-stream tags so that model init and training draws never collide.
_INIT_STREAM = 0
_TRAIN_STREAM = 1


@dataclass
class TrainConfig:
    """Architecture and optimization settings for one training run."""

    batch_size: int = 64
    epochs: int = 4
    d_z: int = 8
    encoder_hidden: tuple = (256, 64)
    disc_hidden: tuple = (64, 16)
    clf_hidden: tuple = (16,)
    lr_reconstruction: float = 1e-3
    lr_discriminator: float = 1e-3
    lr_generator: float = 1e-3
    lr_classifier: float = 1e-3
    lr_supervised_encoder: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    # First-moment decay for the adversarial pair only; low momentum keeps
    # the discriminator/generator game from orbiting instead of settling.
    adversarial_beta1: float = 0.5
    seed: int = 0
    use_reconstruction: bool = True
    use_adversarial: bool = True
    supervised_updates_encoder: bool = True
    # Linear lr decay to this fraction of the base rates by the last epoch;
    # 1.0 keeps rates constant. Damping the late-training rates settles the
    # adversarial game's limit cycle onto the prior.
    lr_decay_to: float = 1.0
    # Exempt the discriminator from that decay. A decayed discriminator can
    # no longer re-localize the (still slowly drifting) encoded cloud, so
    # the frozen end state lands off the prior; keeping it at full rate
    # lets the slowed generator counter the slowed drift accurately.
    decay_discriminator: bool = True
    # Average the weights of the last K epochs (0 disables). The adversarial
    # equilibrium wanders slowly even at decayed rates; averaging the tail
    # iterates centers the latent cloud on the prior.
    swa_last_epochs: int = 0
    # After weight averaging, recalibrate the classifier head against the
    # frozen averaged encoder for this many supervised-only epochs (the
    # averaged encoder's features differ from any single iterate's, so the
    # last-iterate head is stale). Ignored without swa_last_epochs.
    swa_head_refit_epochs: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise InputError("batch_size must be >= 2")
        if self.epochs < 1:
            raise InputError("epochs must be >= 1")
        if self.d_z < 1:
            raise InputError("d_z must be >= 1")
        if not (0.0 < self.lr_decay_to <= 1.0):
            raise InputError("lr_decay_to must be in (0, 1]")
        if self.swa_last_epochs < 0 or self.swa_last_epochs > self.epochs:
            raise InputError("swa_last_epochs must be in [0, epochs]")
        if self.swa_head_refit_epochs < 0:
            raise InputError("swa_head_refit_epochs must be >= 0")
        self.encoder_hidden = tuple(self.encoder_hidden)
        self.disc_hidden = tuple(self.disc_hidden)
        self.clf_hidden = tuple(self.clf_hidden)

    @property
    def supervised_only(self) -> bool:
        return not (self.use_reconstruction or self.use_adversarial)


class AaeModel:
    """The four networks plus the latent dimension they share."""

    def __init__(self, encoder: Mlp, decoder: Mlp, discriminator: Mlp,
                 classifier: Mlp, d_z: int):
        if encoder.fan_out != d_z:
            raise InputError(f"encoder output {encoder.fan_out} != d_z {d_z}")
        for name, net in (("decoder", decoder), ("discriminator", discriminator),
                          ("classifier", classifier)):
            if net.fan_in != d_z:
                raise InputError(f"{name} input {net.fan_in} != d_z {d_z}")
        if decoder.fan_out != encoder.fan_in:
            raise InputError("decoder output does not match encoder input")
        self.encoder = encoder
        self.decoder = decoder
        self.discriminator = discriminator
        self.classifier = classifier
        self.d_z = d_z

    @classmethod
    def build(cls, n_pixels: int, cfg: TrainConfig, seed: Optional[int] = None) -> "AaeModel":
        """Fresh Glorot-initialized networks; discriminator and classifier
        heads start at zero so their untrained outputs are exactly 0.5."""
        seed = cfg.seed if seed is None else seed
        rng = np.random.default_rng(np.random.SeedSequence([seed, _INIT_STREAM]))
        enc_sizes = [n_pixels, *cfg.encoder_hidden, cfg.d_z]
        dec_sizes = [cfg.d_z, *reversed(cfg.encoder_hidden), n_pixels]
        encoder = Mlp.build(enc_sizes, output_activation="linear", rng=rng)
        decoder = Mlp.build(dec_sizes, output_activation="sigmoid", rng=rng)
        discriminator = Mlp.build([cfg.d_z, *cfg.disc_hidden, 1],
                                  output_activation="sigmoid", rng=rng,
                                  zero_final=True)
        classifier = Mlp.build([cfg.d_z, *cfg.clf_hidden, 1],
                               output_activation="sigmoid", rng=rng,
                               zero_final=True)
        return cls(encoder, decoder, discriminator, classifier, cfg.d_z)

    def copy(self) -> "AaeModel":
        return AaeModel(self.encoder.copy(), self.decoder.copy(),
                        self.discriminator.copy(), self.classifier.copy(),
                        self.d_z)

    def networks(self) -> dict[str, Mlp]:
        return {"encoder": self.encoder, "decoder": self.decoder,
                "discriminator": self.discriminator, "classifier": self.classifier}

    def encode(self, images) -> np.ndarray:
        return self.encoder.forward(_image_batch(self, images), cache=False)

    def predict_proba(self, images) -> np.ndarray:
        """Classifier probability per image, clamped inside (0,1)."""
        z = self.encode(images)
        p = self.classifier.forward(z, cache=False).reshape(-1)
        return np.clip(p, BCE_CLAMP_EPS, 1.0 - BCE_CLAMP_EPS)


@dataclass
class AaeOptimizers:
    """One Adam state per training phase and network role.

    The encoder is updated by three different objectives; giving each its
    own moment buffers keeps the phases from suppressing one another
    (a shared second moment lets the large reconstruction gradients shrink
    the adversarial updates to nothing).
    """

    enc_recon: AdamState
    dec_recon: AdamState
    disc: AdamState
    enc_gen: AdamState
    clf: AdamState
    enc_sup: AdamState

    @classmethod
    def for_model(cls, model: AaeModel, cfg: TrainConfig) -> "AaeOptimizers":
        def adam(net, lr, beta1=None):
            return AdamState(net, lr=lr,
                             beta1=cfg.beta1 if beta1 is None else beta1,
                             beta2=cfg.beta2, eps=cfg.adam_eps)

        return cls(enc_recon=adam(model.encoder, cfg.lr_reconstruction),
                   dec_recon=adam(model.decoder, cfg.lr_reconstruction),
                   disc=adam(model.discriminator, cfg.lr_discriminator,
                             cfg.adversarial_beta1),
                   enc_gen=adam(model.encoder, cfg.lr_generator,
                                cfg.adversarial_beta1),
                   clf=adam(model.classifier, cfg.lr_classifier),
                   enc_sup=adam(model.encoder, cfg.lr_supervised_encoder))


def _image_batch(model: AaeModel, batch) -> np.ndarray:
    x = as_tensor(batch)
    if x.ndim != 2 or x.shape[0] < 1:
        raise InputError("batch must be a nonempty 2-D array")
    return x


def _label_vector(labels, n: int) -> np.ndarray:
    y = as_tensor(labels).reshape(-1)
    if y.shape[0] != n:
        raise InputError(f"{y.shape[0]} labels for {n} images")
    if not np.isin(y, (0.0, 1.0)).all():
        raise InputError("labels must be 0 or 1")
    return y


def sample_prior(n: int, d_z: int, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. standard-normal latent codes, deterministic given rng state."""
    if n < 1:
        raise InputError("need n >= 1 prior samples")
    return rng.standard_normal((n, d_z))


def reconstruction_step(model: AaeModel, batch, opts: AaeOptimizers) -> float:
    """One MSE autoencoding update of encoder+decoder; returns the loss
    measured before the update."""
    x = _image_batch(model, batch)
    z = model.encoder.forward(x)
    recon = model.decoder.forward(z)
    loss, lgrad = mse_loss(recon, x)
    dec_grads, gz = model.decoder.backward(lgrad, input_grad=True)
    enc_grads, _ = model.encoder.backward(gz)
    opts.dec_recon.step(model.decoder, dec_grads)
    opts.enc_recon.step(model.encoder, enc_grads)
    return loss


def discriminator_step(model: AaeModel, batch, rng: np.random.Generator,
                       opts: AaeOptimizers) -> float:
    """Train the discriminator to tell prior codes (target 1) from encoded
    codes (target 0); loss is -mean[ln D(z_prior) + ln(1 - D(enc(x)))]."""
    x = _image_batch(model, batch)
    n = x.shape[0]
    z_prior = sample_prior(n, model.d_z, rng)
    z_fake = model.encoder.forward(x, cache=False)
    z_all = np.ascontiguousarray(np.concatenate([z_prior, z_fake], axis=0))
    p = model.discriminator.forward(z_all)
    targets = np.concatenate([np.ones((n, 1)), np.zeros((n, 1))])
    bce, bgrad = bce_loss(p, targets)
    # The per-example loss sums both log terms, so it is twice the mean BCE
    # over the 2n stacked samples.
    d_grads, _ = model.discriminator.backward(2.0 * bgrad)
    opts.disc.step(model.discriminator, d_grads)
    return 2.0 * bce


def generator_step(model: AaeModel, batch, opts: AaeOptimizers) -> float:
    """Update the encoder to make encoded codes look like prior draws:
    loss is -mean[ln D(enc(x))]; the discriminator itself is frozen."""
    x = _image_batch(model, batch)
    z = model.encoder.forward(x)
    p = model.discriminator.forward(z)
    loss, pgrad = bce_loss(p, np.ones_like(p))
    _, gz = model.discriminator.backward(pgrad, input_grad=True)
    enc_grads, _ = model.encoder.backward(gz)
    opts.enc_gen.step(model.encoder, enc_grads)
    return loss


def supervised_step(model: AaeModel, batch, labels, opts: AaeOptimizers,
                    update_encoder: bool = True) -> float:
    """Binary cross-entropy update of the latent classifier (and, by
    default, the encoder underneath it) on a labeled batch."""
    x = _image_batch(model, batch)
    y = _label_vector(labels, x.shape[0])
    z = model.encoder.forward(x)
    p = model.classifier.forward(z)
    loss, pgrad = bce_loss(p, y.reshape(-1, 1))
    clf_grads, gz = model.classifier.backward(pgrad, input_grad=update_encoder)
    opts.clf.step(model.classifier, clf_grads)
    if update_encoder:
        enc_grads, _ = model.encoder.backward(gz)
        opts.enc_sup.step(model.encoder, enc_grads)
    return loss


def _batch_slices(n: int, batch_size: int):
    for start in range(0, n, batch_size):
        yield slice(start, min(start + batch_size, n))


def train_epoch(model: AaeModel, labeled, unlabeled, cfg: TrainConfig,
                opts: AaeOptimizers, rng: np.random.Generator) -> dict[str, float]:
    """One epoch over the data.

    Reconstruction and adversarial phases sweep the union of labeled and
    unlabeled images once (shuffled); the supervised phase cycles through
    the labeled set, one labeled minibatch per union minibatch. With both
    unsupervised phases disabled the epoch is a single supervised pass over
    the labeled set. Returns mean loss per executed phase.
    """
    x_lab, y_lab = labeled
    x_lab = as_tensor(x_lab)
    if x_lab.ndim != 2 or x_lab.shape[0] < 1:
        raise InputError("labeled set must be nonempty")
    y_lab = _label_vector(y_lab, x_lab.shape[0])
    n_lab = x_lab.shape[0]

    if unlabeled is not None and len(unlabeled) > 0:
        x_unl = as_tensor(unlabeled)
        union = np.ascontiguousarray(np.concatenate([x_lab, x_unl], axis=0))
    else:
        union = x_lab

    totals: dict[str, float] = {}
    counts: dict[str, int] = {}

    def record(phase: str, value: float) -> None:
        totals[phase] = totals.get(phase, 0.0) + value
        counts[phase] = counts.get(phase, 0) + 1

    lab_order = rng.permutation(n_lab)
    lab_cursor = 0

    def next_labeled_batch():
        nonlocal lab_cursor
        idx = [lab_order[(lab_cursor + i) % n_lab]
               for i in range(min(cfg.batch_size, n_lab))]
        lab_cursor = (lab_cursor + len(idx)) % n_lab
        sel = np.asarray(idx)
        return np.ascontiguousarray(x_lab[sel]), y_lab[sel]

    if cfg.supervised_only:
        for sl in _batch_slices(n_lab, cfg.batch_size):
            sel = lab_order[sl]
            loss = supervised_step(model, np.ascontiguousarray(x_lab[sel]),
                                   y_lab[sel], opts,
                                   update_encoder=cfg.supervised_updates_encoder)
            record("supervised", loss)
        return {k: totals[k] / counts[k] for k in totals}

    union_order = rng.permutation(union.shape[0])
    for sl in _batch_slices(union.shape[0], cfg.batch_size):
        xb = np.ascontiguousarray(union[union_order[sl]])
        if cfg.use_reconstruction:
            record("reconstruction", reconstruction_step(model, xb, opts))
        if cfg.use_adversarial:
            record("discriminator", discriminator_step(model, xb, rng, opts))
            record("generator", generator_step(model, xb, opts))
        xs, ys = next_labeled_batch()
        record("supervised",
               supervised_step(model, xs, ys, opts,
                               update_encoder=cfg.supervised_updates_encoder))
    return {k: totals[k] / counts[k] for k in totals}


def train_model(n_pixels: int, labeled, unlabeled, cfg: TrainConfig,
                seed: Optional[int] = None) -> tuple[AaeModel, list[dict]]:
    """Build a fresh model and train it cfg.epochs epochs; returns the
    model and per-epoch mean losses. Bit-deterministic in (cfg, seed)."""
    seed = cfg.seed if seed is None else seed
    model = AaeModel.build(n_pixels, cfg, seed=seed)
    opts = AaeOptimizers.for_model(model, cfg)
    base_lrs = {name: state.lr for name, state in vars(opts).items()}
    rng = np.random.default_rng(np.random.SeedSequence([seed, _TRAIN_STREAM]))
    history = []
    swa_sums = None
    swa_count = 0
    for epoch in range(cfg.epochs):
        if cfg.lr_decay_to < 1.0 and cfg.epochs > 1:
            factor = 1.0 - (1.0 - cfg.lr_decay_to) * (epoch / (cfg.epochs - 1))
            for name, state in vars(opts).items():
                state.lr = base_lrs[name] * factor
        history.append(train_epoch(model, labeled, unlabeled, cfg, opts, rng))
        if cfg.swa_last_epochs and epoch >= cfg.epochs - cfg.swa_last_epochs:
            params = [p for net in model.networks().values()
                      for p in net.parameters()]
            if swa_sums is None:
                swa_sums = [p.copy() for p in params]
            else:
                for acc, p in zip(swa_sums, params):
                    acc += p
            swa_count += 1
    if swa_count:
        for acc, p in zip(swa_sums, (p for net in model.networks().values()
                                     for p in net.parameters())):
            p[:] = acc / swa_count
        if cfg.swa_head_refit_epochs:
            refit = AdamState(model.classifier, lr=cfg.lr_classifier,
                              beta1=cfg.beta1, beta2=cfg.beta2,
                              eps=cfg.adam_eps)
            refit_opts = AaeOptimizers(enc_recon=opts.enc_recon,
                                       dec_recon=opts.dec_recon,
                                       disc=opts.disc, enc_gen=opts.enc_gen,
                                       clf=refit, enc_sup=opts.enc_sup)
            x_lab, y_lab = labeled
            x_lab = np.ascontiguousarray(np.asarray(x_lab, dtype=np.float64))
            for _ in range(cfg.swa_head_refit_epochs):
                order = rng.permutation(x_lab.shape[0])
                for sl in _batch_slices(x_lab.shape[0], cfg.batch_size):
                    sel = order[sl]
                    supervised_step(model, np.ascontiguousarray(x_lab[sel]),
                                    np.asarray(y_lab)[sel], refit_opts,
                                    update_encoder=False)
    return model, history


def latent_stats(model: AaeModel, images) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension mean and std of the encoded latent codes."""
    z = model.encode(images)
    return z.mean(axis=0), z.std(axis=0)


def _layer_to_json(layer: DenseLayer) -> dict:
    return {
        "fan_in": layer.fan_in,
        "fan_out": layer.fan_out,
        "activation": layer.activation,
        "weights": layer.weights.reshape(-1).tolist(),
        "bias": layer.bias.tolist(),
    }


def _layer_from_json(obj: dict) -> DenseLayer:
    try:
        weights = np.asarray(obj["weights"], dtype=np.float64).reshape(
            obj["fan_out"], obj["fan_in"])
        return DenseLayer(weights, np.asarray(obj["bias"]), obj["activation"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"bad layer record in checkpoint: {exc}") from None


def save_model(model: AaeModel, path, rng_seed: int = 0,
               rounds_completed: int = 0) -> None:
    """Write a JSON checkpoint; float parameters round-trip bit-exactly
    (shortest-repr decimal serialization)."""
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "d_z": model.d_z,
        "rng_seed": rng_seed,
        "rounds_completed": rounds_completed,
        "networks": {name: [_layer_to_json(l) for l in net.layers]
                     for name, net in model.networks().items()},
    }
    Path(path).write_text(json.dumps(doc), encoding="utf-8")


def model_from_document(doc: dict) -> tuple[AaeModel, dict]:
    if not isinstance(doc, dict) or doc.get("format_version") != CHECKPOINT_VERSION:
        raise DataFormatError(
            f"unsupported checkpoint version {doc.get('format_version')!r}"
            if isinstance(doc, dict) else "checkpoint root must be an object"
        )
    try:
        nets = {name: Mlp([_layer_from_json(l) for l in doc["networks"][name]])
                for name in ("encoder", "decoder", "discriminator", "classifier")}
        model = AaeModel(d_z=doc["d_z"], **nets)
    except (KeyError, TypeError, InputError) as exc:
        raise DataFormatError(f"malformed checkpoint: {exc}") from None
    meta = {"rng_seed": doc.get("rng_seed", 0),
            "rounds_completed": doc.get("rounds_completed", 0)}
    return model, meta


def load_model(path) -> tuple[AaeModel, dict]:
    """Read a model checkpoint; corrupt files raise DataFormatError and
    leave no partial state behind."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"{path}: not valid JSON ({exc})") from None
    return model_from_document(doc)
