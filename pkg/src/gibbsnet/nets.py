"""Model assembly and losses for Gibbs machines and auto-classifier-encoders.

The architecture follows one pattern: a shared tanh encoder feeds affine
heads that emit (mean, log sigma) of the conditional latent density; each
class owns a separate tanh decoder with a sigmoid output layer; an optional
classifier branch (two-unit maxout with batch-normalized first and last
hidden layers) runs beside the auto-encoder on the raw input.

Training minimizes generative error (closed form) plus reconstruction
error, routed through the labeled class decoder, plus the classifier's
softmax cross-entropy; the two branches' losses simply add.  Testing has
no labels, so the latent density becomes a classifier-weighted mixture and
the bound uses the weighted sum of per-class terms.  The non-generative
variant swaps the auto-encoder term for a reconstruction in the space of
observations built from the classifier's first hidden layer.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import autodiff as ad
from .expfam import SQRT_HALF

FAMILIES = ("gaussian", "laplacian")
CLAMP = 1e-7


class UntrainedModelError(RuntimeError):
    pass


@dataclass(frozen=True)
class LayerSpec:
    kind: str          # affine | tanh | sigmoid | maxout2 | batchnorm
    in_dim: int
    out_dim: int

    def __post_init__(self):
        if self.kind == "affine":
            return
        if self.kind == "maxout2":
            if self.in_dim != 2 * self.out_dim:
                raise ValueError("maxout2 halves the width: in_dim = 2*out_dim")
            return
        if self.kind in ("tanh", "sigmoid", "batchnorm"):
            if self.in_dim != self.out_dim:
                raise ValueError(f"{self.kind} keeps the width")
            return
        raise ValueError(f"unknown layer kind {self.kind!r}")


def _chain_check(specs):
    for prev, nxt in zip(specs[:-1], specs[1:]):
        if prev.out_dim != nxt.in_dim:
            raise ValueError(
                f"layer widths do not chain: {prev.kind}:{prev.out_dim} "
                f"-> {nxt.kind}:{nxt.in_dim}")


class Stack:
    """A sequence of layers owning the parameters of its affine members."""

    def __init__(self, specs, seed, name):
        _chain_check(specs)
        self.specs = list(specs)
        self.name = name
        self.params = {}
        for i, spec in enumerate(self.specs):
            if spec.kind == "affine":
                w = ad.parameter(ad.init_weights(spec.in_dim, spec.out_dim,
                                                 seed=seed + 31 * i),
                                 name=f"{name}.{i}.w")
                b = ad.parameter(np.zeros(spec.out_dim), name=f"{name}.{i}.b")
                self.params[f"{name}.{i}.w"] = w
                self.params[f"{name}.{i}.b"] = b

    def apply(self, x, collect=None):
        out = x
        for i, spec in enumerate(self.specs):
            if spec.kind == "affine":
                out = ad.affine(out, self.params[f"{self.name}.{i}.w"],
                                self.params[f"{self.name}.{i}.b"])
            elif spec.kind == "tanh":
                out = ad.tanh(out)
            elif spec.kind == "sigmoid":
                out = ad.sigmoid(out)
            elif spec.kind == "maxout2":
                out = ad.maxout2(out)
            else:
                out = ad.batchnorm(out)
            if collect is not None:
                collect.append(out)
        return out


def affine_head(in_dim, out_dim, seed, name):
    return Stack([LayerSpec("affine", in_dim, out_dim)], seed, name)


class AceModel:
    """Shared encoder, per-class latent heads and decoders, classifier branch."""

    def __init__(self, encoder, mu_heads, logsig_heads, decoders, classifier,
                 family, n_obs, n_lat, n_classes, descriptor):
        if family not in FAMILIES:
            raise ValueError(f"unsupported latent family {family!r}")
        if not (len(mu_heads) == len(logsig_heads) == len(decoders) == n_classes):
            raise ValueError("per-class structures must all have n_classes members")
        self.encoder = encoder
        self.mu_heads = mu_heads
        self.logsig_heads = logsig_heads
        self.decoders = decoders
        self.classifier = classifier
        self.family = family
        self.n_obs = n_obs
        self.n_lat = n_lat
        self.n_classes = n_classes
        self.descriptor = descriptor
        self.trained = False

    def parameters(self):
        out = {}
        stacks = ([self.encoder] if self.encoder else []) + \
            self.mu_heads + self.logsig_heads + self.decoders + \
            ([self.classifier] if self.classifier else [])
        for stack in stacks:
            out.update(stack.params)
        return out

    def mark_trained(self):
        self.trained = True

    # -- plain-array helpers used by evaluation and analysis paths --------

    def encode(self, x):
        """Per-class latent specs (mean, sigma per observation row)."""
        enc = self.encoder.apply(ad.constant(x))
        out = []
        for c in range(self.n_classes):
            mu = self.mu_heads[c].apply(enc).value
            sigma = np.exp(self.logsig_heads[c].apply(enc).value)
            out.append(LatentSpec(mu, sigma))
        return out

    def decode(self, klass, z):
        return self.decoders[klass].apply(ad.constant(np.atleast_2d(z))).value

    def classifier_logits(self, x):
        if self.classifier is None:
            raise ValueError("model has no classifier branch")
        return self.classifier.apply(ad.constant(x)).value


@dataclass(frozen=True)
class LatentSpec:
    """Macroscopic parameters of one conditional latent density.

    One row per observation; the optional symmetry block carries
    (h, v, r, phi) statistics with their momenta scales when symmetry
    coordinates are appended to the latent layer.
    """
    mean: np.ndarray
    scale: np.ndarray
    symmetry: object = None

    def __post_init__(self):
        if np.any(self.scale <= 0):
            raise ValueError("latent scales must be positive")


@dataclass(frozen=True)
class LossBreakdown:
    """Scalar loss nodes; ``total`` is the training target."""
    generative: ad.Node
    reconstruction: ad.Node
    classifier: ad.Node
    total: ad.Node
    dual_reconstruction: ad.Node = None

    def value(self, part):
        node = getattr(self, part)
        return float(node.value) if node is not None else 0.0

    def as_dict(self):
        out = {p: self.value(p) for p in
               ("generative", "reconstruction", "classifier", "total")}
        if self.dual_reconstruction is not None:
            out["dual_reconstruction"] = self.value("dual_reconstruction")
        return out


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def _encoder_specs(n_obs, hidden):
    specs, width = [], n_obs
    for h in hidden:
        specs += [LayerSpec("affine", width, h), LayerSpec("tanh", h, h)]
        width = h
    return specs, width


def _decoder_specs(n_lat, hidden, n_obs):
    specs, width = [], n_lat
    for h in hidden:
        specs += [LayerSpec("affine", width, h), LayerSpec("tanh", h, h)]
        width = h
    specs += [LayerSpec("affine", width, n_obs), LayerSpec("sigmoid", n_obs, n_obs)]
    return specs


def _classifier_specs(n_obs, hidden, n_classes):
    """Maxout hidden layers; first and last hidden are batch-normalized."""
    specs, width = [], n_obs
    for j, h in enumerate(hidden):
        specs += [LayerSpec("affine", width, 2 * h), LayerSpec("maxout2", 2 * h, h)]
        if j == 0 or j == len(hidden) - 1:
            specs.append(LayerSpec("batchnorm", h, h))
        width = h
    specs.append(LayerSpec("affine", width, n_classes))
    return specs


def build_vae(n_obs, enc_hidden, n_lat, dec_hidden, family, seed):
    return build_ace(n_obs, enc_hidden, n_lat, dec_hidden, n_classes=1,
                     cls_hidden=None, family=family, seed=seed)


def build_ace(n_obs, enc_hidden, n_lat, dec_hidden, n_classes, cls_hidden,
              family, seed, shared_heads=False):
    enc_specs, enc_out = _encoder_specs(n_obs, enc_hidden)
    encoder = Stack(enc_specs, seed, "enc")
    n_heads = 1 if shared_heads else n_classes
    mu_heads = [affine_head(enc_out, n_lat, seed + 1000 + c, f"mu{c}")
                for c in range(n_heads)]
    logsig_heads = [affine_head(enc_out, n_lat, seed + 2000 + c, f"logsig{c}")
                    for c in range(n_heads)]
    if shared_heads:
        mu_heads = mu_heads * n_classes
        logsig_heads = logsig_heads * n_classes
    decoders = [Stack(_decoder_specs(n_lat, dec_hidden, n_obs),
                      seed + 3000 + c, f"dec{c}") for c in range(n_classes)]
    classifier = None
    if cls_hidden:
        classifier = Stack(_classifier_specs(n_obs, cls_hidden, n_classes),
                           seed + 4000, "cls")
    descriptor = {"arch": "ace" if cls_hidden else "vae", "n_obs": n_obs,
                  "enc_hidden": list(enc_hidden), "n_lat": n_lat,
                  "dec_hidden": list(dec_hidden), "n_classes": n_classes,
                  "cls_hidden": list(cls_hidden) if cls_hidden else None,
                  "family": family, "seed": seed, "shared_heads": shared_heads}
    return AceModel(encoder, mu_heads, logsig_heads, decoders, classifier,
                    family, n_obs, n_lat, n_classes, descriptor)


def build_classifier(n_obs, cls_hidden, n_classes, seed):
    """Classifier branch alone (no auto-encoder side)."""
    classifier = Stack(_classifier_specs(n_obs, cls_hidden, n_classes),
                       seed + 4000, "cls")
    descriptor = {"arch": "classifier", "n_obs": n_obs, "enc_hidden": [],
                  "n_lat": 0, "dec_hidden": [], "n_classes": n_classes,
                  "cls_hidden": list(cls_hidden), "family": "gaussian",
                  "seed": seed, "shared_heads": False}
    model = AceModel.__new__(AceModel)
    model.encoder = None
    model.mu_heads = []
    model.logsig_heads = []
    model.decoders = []
    model.classifier = classifier
    model.family = "gaussian"
    model.n_obs = n_obs
    model.n_lat = 0
    model.n_classes = n_classes
    model.descriptor = descriptor
    model.trained = False
    return model


def rebuild(descriptor):
    if descriptor["arch"] == "classifier":
        return build_classifier(descriptor["n_obs"], descriptor["cls_hidden"],
                                descriptor["n_classes"], descriptor["seed"])
    return build_ace(descriptor["n_obs"], descriptor["enc_hidden"],
                     descriptor["n_lat"], descriptor["dec_hidden"],
                     descriptor["n_classes"], descriptor["cls_hidden"],
                     descriptor["family"], descriptor["seed"],
                     descriptor.get("shared_heads", False))


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def noise_shift(family, u):
    """Standardized-member reparameterization of uniform noise."""
    u = np.asarray(u, dtype=np.float64)
    if np.any(u <= 0) or np.any(u >= 1):
        raise ValueError("noise must lie strictly in (0, 1)")
    if family == "gaussian":
        return ndtri(u)
    w = u - 0.5
    return -SQRT_HALF * np.sign(w) * np.log1p(-2.0 * np.abs(w))


def generative_error_node(family, mu, logsig):
    """Per-coordinate closed-form divergence from the standardized prior."""
    if family == "gaussian":
        quad = ad.scale(ad.add(ad.mul(mu, mu), ad.exp(ad.scale(logsig, 2.0))), 0.5)
        return ad.sub(ad.shift(quad, -0.5), logsig)
    # laplacian: -log s + |m|/sqrt(.5) + s*exp(-|m|/(s*sqrt(.5))) - 1
    amu = ad.absolute(mu)
    ratio = ad.scale(ad.mul(amu, ad.exp(ad.neg(logsig))), 1.0 / SQRT_HALF)
    tail = ad.exp(ad.sub(logsig, ratio))
    return ad.add(ad.sub(ad.scale(amu, 1.0 / SQRT_HALF), logsig),
                  ad.shift(tail, -1.0))


def _bce_elements(xhat, x, binarized):
    x = np.asarray(x, dtype=np.float64)
    if binarized and not np.all((x == 0.0) | (x == 1.0)):
        raise ValueError("targets must be 0/1 in binarized mode")
    if not binarized and (x.min() < 0 or x.max() > 1):
        raise ValueError("targets must lie in [0, 1]")
    clamped = ad.clamp(xhat, CLAMP, 1.0 - CLAMP)
    hit = ad.mul(ad.constant(x), ad.log(clamped))
    miss = ad.mul(ad.constant(1.0 - x), ad.log(ad.sub(ad.constant(np.ones_like(x)),
                                                      clamped)))
    return ad.neg(ad.add(hit, miss))


def reconstruction_error(xhat, x, binarized=True):
    """Batch-mean of per-observation summed binary cross-entropies."""
    batch = xhat.value.shape[0]
    return ad.scale(ad.total_sum(_bce_elements(xhat, x, binarized)), 1.0 / batch)


def _zero():
    return ad.constant(0.0)


def _autoencoder_terms(model, x, noise, labels, binarized):
    """(generative, reconstruction) scalar nodes with per-class routing."""
    x = np.asarray(x, dtype=np.float64)
    batch = x.shape[0]
    shift = noise_shift(model.family, noise)
    enc = model.encoder.apply(ad.constant(x))

    def class_terms(c, enc_rows, x_rows, shift_rows):
        mu = model.mu_heads[c].apply(enc_rows)
        logsig = model.logsig_heads[c].apply(enc_rows)
        gen = ad.total_sum(generative_error_node(model.family, mu, logsig))
        z = ad.add(mu, ad.mul(ad.exp(logsig), ad.constant(shift_rows)))
        xhat = model.decoders[c].apply(z)
        rec = ad.total_sum(_bce_elements(xhat, x_rows, binarized))
        return gen, rec

    if labels is None:
        if model.n_classes != 1:
            raise ValueError("labels are required with per-class decoders")
        gen, rec = class_terms(0, enc, x, shift)
    else:
        labels = np.asarray(labels)
        if labels.min() < 0 or labels.max() >= model.n_classes:
            raise ValueError("label out of range")
        gen = rec = None
        for c in np.unique(labels):
            idx = np.flatnonzero(labels == c)
            g, r = class_terms(int(c), ad.take_rows(enc, idx), x[idx], shift[idx])
            gen = g if gen is None else ad.add(gen, g)
            rec = r if rec is None else ad.add(rec, r)
    return ad.scale(gen, 1.0 / batch), ad.scale(rec, 1.0 / batch)


def vae_bound(model, x, noise, labels=None, binarized=True):
    """Generative plus reconstruction error: the trainable cross-entropy bound."""
    gen, rec = _autoencoder_terms(model, x, noise, labels, binarized)
    total = ad.add(gen, rec)
    return LossBreakdown(gen, rec, _zero(), total)


def classifier_nll(model, x, labels):
    """Softmax cross-entropy of the classifier branch."""
    x = np.asarray(x, dtype=np.float64)
    labels = np.asarray(labels)
    logits = model.classifier.apply(ad.constant(x))
    onehot = np.zeros((x.shape[0], model.n_classes))
    onehot[np.arange(x.shape[0]), labels] = 1.0
    picked = ad.mul(ad.log_softmax(logits), ad.constant(onehot))
    return ad.scale(ad.neg(ad.total_sum(picked)), 1.0 / x.shape[0])


def dual_reconstruction_error(hidden, x, binarized=False):
    """Observation-space reconstruction through the hidden-layer projector.

    Reconstructs each observable column of ``x`` as sigmoid(H H^T x_i / B)
    and averages the column cross-entropies with the 1/B normalization of
    the observable space.
    """
    x = np.asarray(x, dtype=np.float64)
    batch = x.shape[0]
    if hidden.value.shape[0] != batch:
        raise ValueError("hidden activations and batch must pair up")
    projector = ad.matmul(hidden, ad.transpose(hidden))
    logits = ad.scale(ad.matmul(projector, ad.constant(x)), 1.0 / batch)
    return ad.scale(ad.total_sum(_bce_elements(ad.sigmoid(logits), x, binarized)),
                    1.0 / batch)


def classifier_first_hidden(model, x):
    """Activations after the first hidden group (its batchnorm included)."""
    taps = []
    model.classifier.apply(ad.constant(np.asarray(x, dtype=np.float64)),
                           collect=taps)
    for spec, node in zip(model.classifier.specs, taps):
        if spec.kind == "batchnorm":
            return node
    for spec, node in zip(model.classifier.specs, taps):
        if spec.kind in ("maxout2", "tanh", "sigmoid"):
            return node
    raise ValueError("classifier has no hidden layer")


def ace_loss(model, x, labels, noise, include_dual=False, binarized=True):
    """Labeled composite loss: auto-encoder bound plus classifier term."""
    gen, rec = _autoencoder_terms(model, x, noise, labels, binarized)
    cls = classifier_nll(model, x, labels) if model.classifier else _zero()
    total = ad.add(ad.add(gen, rec), cls)
    dual = None
    if include_dual:
        dual = dual_reconstruction_error(classifier_first_hidden(model, x), x,
                                         binarized=binarized)
        total = ad.add(total, dual)
    return LossBreakdown(gen, rec, cls, total, dual)


def classifier_loss(model, x, labels, include_dual=False, binarized=False):
    """Classifier-only objective; the non-generative variant adds the dual term."""
    cls = classifier_nll(model, x, labels)
    total = cls
    dual = None
    if include_dual:
        dual = dual_reconstruction_error(classifier_first_hidden(model, x), x,
                                         binarized=binarized)
        total = ad.add(cls, dual)
    return LossBreakdown(_zero(), _zero(), cls, total, dual)


def ace_test_bound(model, x, noise, binarized=True):
    """Unlabeled bound: classifier probabilities weight the class mixture.

    The generative term applies the mixture upper bound (weighted sum of
    per-class divergences); the reconstruction term weights each class
    decoder's per-observation error the same way.
    """
    x = np.asarray(x, dtype=np.float64)
    batch = x.shape[0]
    shift = noise_shift(model.family, noise)
    weights = classify(model, x, _allow_untrained=True)
    enc = model.encoder.apply(ad.constant(x))
    gen_acc = rec_acc = None
    for c in range(model.n_classes):
        mu = model.mu_heads[c].apply(enc)
        logsig = model.logsig_heads[c].apply(enc)
        gen_rows = ad.row_sum(generative_error_node(model.family, mu, logsig))
        z = ad.add(mu, ad.mul(ad.exp(logsig), ad.constant(shift)))
        xhat = model.decoders[c].apply(z)
        rec_rows = ad.row_sum(_bce_elements(xhat, x, binarized))
        w = ad.constant(weights[:, c])
        gen_acc = ad.mul(w, gen_rows) if gen_acc is None else \
            ad.add(gen_acc, ad.mul(w, gen_rows))
        rec_acc = ad.mul(w, rec_rows) if rec_acc is None else \
            ad.add(rec_acc, ad.mul(w, rec_rows))
    gen = ad.scale(ad.total_sum(gen_acc), 1.0 / batch)
    rec = ad.scale(ad.total_sum(rec_acc), 1.0 / batch)
    return LossBreakdown(gen, rec, _zero(), ad.add(gen, rec))


# ---------------------------------------------------------------------------
# inference helpers
# ---------------------------------------------------------------------------

def softmax_rows(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def classify(model, x, _allow_untrained=False):
    """Class probabilities from the classifier branch, or uniform without one."""
    if not model.trained and not _allow_untrained:
        raise UntrainedModelError("model parameters are still at initialization")
    x = np.asarray(x, dtype=np.float64)
    if model.classifier is None:
        return np.full((x.shape[0], model.n_classes), 1.0 / model.n_classes)
    return softmax_rows(model.classifier.apply(ad.constant(x)).value)


def generate(model, klass, z=None, noise=None):
    """Decode a latent point (or prior noise draw) through one class decoder."""
    if not model.trained:
        raise UntrainedModelError("model parameters are still at initialization")
    if z is None:
        if noise is None:
            raise ValueError("give either a latent point or prior noise")
        z = noise_shift(model.family, noise)   # standardized prior sample
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    return model.decoders[klass].apply(ad.constant(z)).value[0]


def latent_grid(points=30, lo=-6.0, hi=6.0):
    """Equally spaced deterministic latent grid for 1-d manifold sweeps."""
    return np.linspace(lo, hi, points)
