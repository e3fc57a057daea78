"""
Desk-scale numeric executor: forward and backward passes for the six
primitives, the cell-stacking model skeleton, momentum SGD and a synthetic
image dataset.

Tensors are float64 numpy arrays in (batch, channels, height, width) layout.
"""

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from assembly import TensorShape, edge_output_channels, infer_shapes
from config import NORM_EPSILON, NORM_MOMENTUM
from exceptions import ConfigError, NumericFailure, SpatialUnderflow
from genotype import PrimitiveOp

logger = logging.getLogger(__name__)

Tensor = np.ndarray

# Fan-in scaled uniform bounds: sqrt(CONV_INIT_GAIN / fan_in) for layers
# followed by a rectifier, sqrt(LINEAR_INIT_GAIN / fan_in) for the classifier
CONV_INIT_GAIN = 6.0
LINEAR_INIT_GAIN = 3.0


def _uniform(rng, shape, fan_in, gain):
    bound = math.sqrt(gain / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _pad(x, p, value=0.0):
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)), mode="constant", constant_values=value)


def _out_size(size, k, stride):
    return (size + 2 * (k // 2) - k) // stride + 1


def _windows(xp, k, stride, out_h, out_w):
    b, c, _, _ = xp.shape
    sb, sc, sh, sw = xp.strides
    return np.lib.stride_tricks.as_strided(
        xp,
        (b, c, out_h, out_w, k, k),
        (sb, sc, stride * sh, stride * sw, sh, sw),
        writeable=False,
    )


def _unwindow(grad_windows, padded_shape, k, stride):
    """Scatter-add gradients of the window view back onto the padded input"""
    dxp = np.zeros(padded_shape)
    out_h, out_w = grad_windows.shape[2], grad_windows.shape[3]
    for di in range(k):
        for dj in range(k):
            dxp[:, :, di:di + stride * (out_h - 1) + 1:stride, dj:dj + stride * (out_w - 1) + 1:stride] += \
                grad_windows[:, :, :, :, di, dj]
    return dxp


class Layer:
    """Base layer: learnable arrays in `params`, matching gradients in `grads`"""

    decayed = ()

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def leaves(self):
        yield self

    def zero_grad(self):
        for leaf in self.leaves():
            for key, value in leaf.params.items():
                leaf.grads[key] = np.zeros_like(value)

    def parameter_count(self):
        return sum(value.size for leaf in self.leaves() for value in leaf.params.values())

    def named_parameters(self):
        """Yield (name, layer, key) for every learnable array in a fixed order"""
        for index, leaf in enumerate(self.leaves()):
            for key in leaf.params:
                yield f"{index}.{type(leaf).__name__}.{key}", leaf, key

    def freeze_norm(self, frozen=True):
        """Switch every normalization layer to its running statistics"""
        for leaf in self.leaves():
            if isinstance(leaf, BatchNorm):
                leaf.frozen = frozen


class Sequential(Layer):
    def __init__(self, layers):
        super().__init__()
        self.layers = list(layers)

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def leaves(self):
        for layer in self.layers:
            yield from layer.leaves()


class Identity(Layer):
    def forward(self, x, train=False):
        return x

    def backward(self, dout):
        return dout


class ReLU(Layer):
    def forward(self, x, train=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout):
        return dout * self._mask


class Conv2d(Layer):
    """Bias-free dense convolution with same padding"""

    decayed = ("weight",)

    def __init__(self, c_in, c_out, k, rng, stride=1):
        super().__init__()
        self.k = k
        self.stride = stride
        self.params["weight"] = _uniform(rng, (c_out, c_in, k, k), c_in * k * k, CONV_INIT_GAIN)
        self.zero_grad()

    def forward(self, x, train=False):
        p = self.k // 2
        out_h, out_w = _out_size(x.shape[2], self.k, self.stride), _out_size(x.shape[3], self.k, self.stride)
        xp = _pad(x, p)
        win = _windows(xp, self.k, self.stride, out_h, out_w)
        self._cache = (x.shape, xp.shape, win)
        return np.einsum("bihwkl,oikl->bohw", win, self.params["weight"])

    def backward(self, dout):
        x_shape, xp_shape, win = self._cache
        weight = self.params["weight"]
        self.grads["weight"] += np.einsum("bihwkl,bohw->oikl", win, dout)
        dwin = np.einsum("bohw,oikl->bihwkl", dout, weight)
        dxp = _unwindow(dwin, xp_shape, self.k, self.stride)
        p = self.k // 2
        return dxp[:, :, p:p + x_shape[2], p:p + x_shape[3]]


class DepthwiseConv2d(Layer):
    """Per-channel k x k convolution with same padding"""

    decayed = ("weight",)

    def __init__(self, channels, k, rng, stride=1):
        super().__init__()
        self.k = k
        self.stride = stride
        self.params["weight"] = _uniform(rng, (channels, k, k), k * k, CONV_INIT_GAIN)
        self.zero_grad()

    def forward(self, x, train=False):
        p = self.k // 2
        out_h, out_w = _out_size(x.shape[2], self.k, self.stride), _out_size(x.shape[3], self.k, self.stride)
        xp = _pad(x, p)
        win = _windows(xp, self.k, self.stride, out_h, out_w)
        self._cache = (x.shape, xp.shape, win)
        return np.einsum("bchwkl,ckl->bchw", win, self.params["weight"])

    def backward(self, dout):
        x_shape, xp_shape, win = self._cache
        self.grads["weight"] += np.einsum("bchwkl,bchw->ckl", win, dout)
        dwin = np.einsum("bchw,ckl->bchwkl", dout, self.params["weight"])
        dxp = _unwindow(dwin, xp_shape, self.k, self.stride)
        p = self.k // 2
        return dxp[:, :, p:p + x_shape[2], p:p + x_shape[3]]


class BatchNorm(Layer):
    """
    Per-channel normalization with scale and shift.

    Train mode normalizes with batch statistics and updates the running
    averages; eval mode uses the running averages. A frozen layer always uses
    the running averages, which makes it a fixed per-channel affine map.
    """

    def __init__(self, channels):
        super().__init__()
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.frozen = False
        self.zero_grad()

    def forward(self, x, train=False):
        gamma = self.params["gamma"][None, :, None, None]
        beta = self.params["beta"][None, :, None, None]
        if train and not self.frozen:
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            count = x.shape[0] * x.shape[2] * x.shape[3]
            unbiased = var * count / max(count - 1, 1)
            self.running_mean = (1 - NORM_MOMENTUM) * self.running_mean + NORM_MOMENTUM * mean
            self.running_var = (1 - NORM_MOMENTUM) * self.running_var + NORM_MOMENTUM * unbiased
            batch_stats = True
        else:
            mean, var = self.running_mean, self.running_var
            batch_stats = False
        inv_std = 1.0 / np.sqrt(var + NORM_EPSILON)
        xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
        self._cache = (xhat, inv_std, batch_stats)
        return gamma * xhat + beta

    def backward(self, dout):
        xhat, inv_std, batch_stats = self._cache
        self.grads["gamma"] += (dout * xhat).sum(axis=(0, 2, 3))
        self.grads["beta"] += dout.sum(axis=(0, 2, 3))
        dxhat = dout * self.params["gamma"][None, :, None, None]
        if not batch_stats:
            return dxhat * inv_std[None, :, None, None]
        count = dout.shape[0] * dout.shape[2] * dout.shape[3]
        sum_dxhat = dxhat.sum(axis=(0, 2, 3), keepdims=True)
        sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
        return (inv_std[None, :, None, None] / count) * (count * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)


class MaxPool3x3(Layer):
    """Stride-1 max pooling; padded positions never win"""

    def forward(self, x, train=False):
        xp = _pad(x, 1, value=-np.inf)
        win = _windows(xp, 3, 1, x.shape[2], x.shape[3])
        flat = win.reshape(win.shape[:4] + (9,))
        self._argmax = flat.argmax(axis=-1)
        self._shapes = (x.shape, xp.shape)
        return flat.max(axis=-1)

    def backward(self, dout):
        x_shape, xp_shape = self._shapes
        grad = np.zeros(dout.shape + (9,))
        np.put_along_axis(grad, self._argmax[..., None], dout[..., None], axis=-1)
        dxp = _unwindow(grad.reshape(dout.shape + (3, 3)), xp_shape, 3, 1)
        return dxp[:, :, 1:1 + x_shape[2], 1:1 + x_shape[3]]


class AvgPool3x3(Layer):
    """Stride-1 average pooling dividing by the number of valid positions"""

    def forward(self, x, train=False):
        h, w = x.shape[2], x.shape[3]
        ones = _pad(np.ones((1, 1, h, w)), 1)
        self._count = _windows(ones, 3, 1, h, w).sum(axis=(-2, -1))
        xp = _pad(x, 1)
        self._shapes = (x.shape, xp.shape)
        return _windows(xp, 3, 1, h, w).sum(axis=(-2, -1)) / self._count

    def backward(self, dout):
        x_shape, xp_shape = self._shapes
        spread = np.broadcast_to((dout / self._count)[..., None, None], dout.shape + (3, 3))
        dxp = _unwindow(spread, xp_shape, 3, 1)
        return dxp[:, :, 1:1 + x_shape[2], 1:1 + x_shape[3]]


class GlobalAvgPool(Layer):
    def forward(self, x, train=False):
        self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, dout):
        b, c, h, w = self._shape
        return np.broadcast_to(dout[:, :, None, None] / (h * w), self._shape).copy()


class Linear(Layer):
    decayed = ("weight",)

    def __init__(self, c_in, c_out, rng):
        super().__init__()
        self.params["weight"] = _uniform(rng, (c_out, c_in), c_in, LINEAR_INIT_GAIN)
        self.params["bias"] = np.zeros(c_out)
        self.zero_grad()

    def forward(self, x, train=False):
        self._x = x
        return x @ self.params["weight"].T + self.params["bias"]

    def backward(self, dout):
        self.grads["weight"] += dout.T @ self._x
        self.grads["bias"] += dout.sum(axis=0)
        return dout @ self.params["weight"]


def separable_conv(c_in, c_out, rng, stride=1):
    """3x3 depthwise then 1x1 pointwise convolution, normalized and rectified"""
    return Sequential([
        DepthwiseConv2d(c_in, 3, rng, stride=stride),
        Conv2d(c_in, c_out, 1, rng),
        BatchNorm(c_out),
        ReLU(),
    ])


def make_primitive(op, c_in, c_out, rng):
    """
    Build the executable layer of one primitive edge.

    Args:
        op (PrimitiveOp): Edge operation
        c_in (int): Input channels
        c_out (int): Output channels (ignored by width-preserving ops)
        rng (numpy.random.Generator): Weight initialization stream
    """
    if op == PrimitiveOp.IDENTITY:
        return Identity()
    if op == PrimitiveOp.CONV1X1:
        return Sequential([Conv2d(c_in, c_out, 1, rng), BatchNorm(c_out), ReLU()])
    if op == PrimitiveOp.DEPTHWISE_CONV3X3:
        return Sequential([DepthwiseConv2d(c_in, 3, rng), BatchNorm(c_in), ReLU()])
    if op == PrimitiveOp.SEPARABLE_CONV3X3:
        return separable_conv(c_in, c_out, rng)
    if op == PrimitiveOp.MAX_POOL3X3:
        return MaxPool3x3()
    if op == PrimitiveOp.AVG_POOL3X3:
        return AvgPool3x3()
    raise ValueError(f"no executable layer for {op!r}")


def concat_channels(parts):
    return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=1)


def split_channels(dout, widths):
    if len(widths) == 1:
        return [dout]
    bounds = np.cumsum(widths)[:-1]
    return np.split(dout, bounds, axis=1)


class Cell(Layer):
    """
    Executable flattened cell.

    Nodes are evaluated in topological order; a node's feature map is the
    channel concatenation of its incoming edge outputs, in edge order. The cell
    channel constant C is the cell's own input width.
    """

    def __init__(self, arch, c_in, rng):
        super().__init__()
        self.arch = arch
        self.c_in = c_in
        shapes = infer_shapes(arch, TensorShape(1, c_in, 1, 1), c_in)
        self.channels = {node_id: shape.channels for node_id, shape in shapes.items()}
        self.out_channels = self.channels[arch.sink]
        self.order = [n for n in arch.node_ids() if n != arch.source]
        self.incoming = {n: [] for n in self.order}
        self.modules = []
        for index, e in enumerate(arch.edges):
            c_out = edge_output_channels(e, self.channels, c_in)
            self.modules.append(make_primitive(e.op, self.channels[e.src], c_out, rng))
            self.incoming[e.dst].append((index, e, c_out))
        self.node_shapes = {}

    def forward(self, x, train=False):
        values = {self.arch.source: x}
        for node_id in self.order:
            parts = [self.modules[index].forward(values[e.src], train) for index, e, _ in self.incoming[node_id]]
            values[node_id] = concat_channels(parts)
        self.node_shapes = {node_id: value.shape for node_id, value in values.items()}
        return values[self.arch.sink]

    def backward(self, dout):
        grads = {self.arch.sink: dout}
        for node_id in reversed(self.order):
            g = grads.pop(node_id)
            entries = self.incoming[node_id]
            for (index, e, _), part in zip(entries, split_channels(g, [w for _, _, w in entries])):
                dx = self.modules[index].backward(part)
                grads[e.src] = grads[e.src] + dx if e.src in grads else dx
        return grads[self.arch.source]

    def leaves(self):
        for module in self.modules:
            yield from module.leaves()


@dataclass(frozen=True)
class ModelSpec:
    cell: object
    stem_channels: int = 16
    cells_per_group: int = 1
    groups: int = 3
    num_classes: int = 10
    input_channels: int = 3
    input_size: int = 8

    def __post_init__(self):
        if self.stem_channels < 1 or self.cells_per_group < 1 or self.groups < 1:
            raise ConfigError("stem_channels, cells_per_group and groups must all be >= 1")


def minimum_input_size(groups):
    """Smallest input size the model accepts: each reduction halves a map of at least 2 pixels"""
    return 2 ** groups


class Model(Layer):
    """
    Small classification model around a learned cell.

    A 3x3 stem convolution, then `groups` groups of N cells. Every cell (with c
    input channels) is followed by a 3x3 separable convolution with stride 1 and
    c channels, or stride 2 and 2c channels after the last cell of a group.
    Global average pooling and a linear classifier close the model.
    """

    def __init__(self, spec, rng):
        super().__init__()
        if spec.input_size < minimum_input_size(spec.groups):
            raise SpatialUnderflow(
                f"input size {spec.input_size} is below the minimum of {minimum_input_size(spec.groups)} pixels "
                f"for {spec.groups} groups: every stride-2 reduction must halve a map of at least 2 pixels")
        self.spec = spec
        c = spec.stem_channels
        self.stem = Sequential([Conv2d(spec.input_channels, c, 3, rng), BatchNorm(c), ReLU()])
        blocks = []
        self.cells = []
        for _ in range(spec.groups):
            for n in range(spec.cells_per_group):
                cell = Cell(spec.cell, c, rng)
                last = n == spec.cells_per_group - 1
                c_next = 2 * c if last else c
                blocks.append(cell)
                blocks.append(separable_conv(cell.out_channels, c_next, rng, stride=2 if last else 1))
                self.cells.append(cell)
                c = c_next
        self.body = Sequential(blocks)
        self.pool = GlobalAvgPool()
        self.classifier = Linear(c, spec.num_classes, rng)
        self._parts = [self.stem, self.body, self.pool, self.classifier]

    def forward(self, x, train=False):
        for part in self._parts:
            x = part.forward(x, train)
        return x

    def backward(self, dout):
        for part in reversed(self._parts):
            dout = part.backward(dout)
        return dout

    def leaves(self):
        for part in self._parts:
            yield from part.leaves()


def build_model(spec, rng=None):
    """
    Build the executable model skeleton of a ModelSpec.

    Raises:
        SpatialUnderflow: if input_size is below minimum_input_size(groups)
    """
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    return Model(spec, rng)


def forward(model, x, mode="eval"):
    """
    Evaluate a model on a batch.

    Raises:
        NumericFailure: if the logits are not finite
    """
    logits = model.forward(x, train=(mode == "train"))
    if not np.all(np.isfinite(logits)):
        raise NumericFailure("non-finite logits in forward pass")
    return logits


def softmax_cross_entropy(logits, labels):
    """Mean softmax cross-entropy and its gradient (softmax - one-hot) / batch"""
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    batch = logits.shape[0]
    loss = -np.log(probs[np.arange(batch), labels] + 1e-300).mean()
    dlogits = probs.copy()
    dlogits[np.arange(batch), labels] -= 1.0
    return loss, dlogits / batch


def gradients(model, x, labels, weight_decay=0.0, mode="train"):
    """
    Loss and exact gradients of every learnable parameter.

    The loss is mean softmax cross-entropy plus 0.5 * weight_decay * |w|^2 over
    convolution and linear weights, so decay adds weight_decay * w to their
    gradients.

    Returns:
        tuple: ({parameter name: gradient array}, loss)

    Raises:
        NumericFailure: on non-finite loss or gradients
    """
    model.zero_grad()
    logits = forward(model, x, mode)
    loss, dlogits = softmax_cross_entropy(logits, labels)
    model.backward(dlogits)
    grads = {}
    for name, leaf, key in model.named_parameters():
        grad = leaf.grads[key]
        if weight_decay and key in leaf.decayed:
            weight = leaf.params[key]
            loss += 0.5 * weight_decay * float((weight * weight).sum())
            grad = grad + weight_decay * weight
        grads[name] = grad
    if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
        raise NumericFailure("non-finite loss or gradient")
    return grads, float(loss)


@dataclass(frozen=True)
class TrainerSettings:
    steps: int = 200
    batch: int = 32
    schedule: tuple = ((0, 0.1),)
    momentum: float = 0.9
    weight_decay: float = 3e-4
    seed: int = 0

    def __post_init__(self):
        steps = [s for s, _ in self.schedule]
        if not self.schedule or steps != sorted(steps):
            raise ConfigError("learning-rate schedule must be non-empty and sorted by step")
        if any(rate <= 0 for _, rate in self.schedule):
            raise ConfigError("learning rates must be positive")
        if self.batch < 1 or self.steps < 0:
            raise ConfigError("batch must be >= 1 and steps >= 0")

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(
                steps=int(data["steps"]),
                batch=int(data["batch"]),
                schedule=tuple((int(s), float(r)) for s, r in data["schedule"]),
                momentum=float(data["momentum"]),
                weight_decay=float(data["weight_decay"]),
                seed=int(data["seed"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"malformed trainer settings: {e!r}") from e

    def rate_at(self, step):
        rate = self.schedule[0][1]
        for start, value in self.schedule:
            if start <= step:
                rate = value
        return rate


@dataclass(frozen=True)
class Dataset:
    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    train_index: np.ndarray
    val_index: np.ndarray
    classes: int
    size: int = field(default=8)


def synth_dataset(classes, per_class, size, seed, validation_fraction=0.25,
                  contrast=0.6, noise=0.6, offset=0.1, label_noise=0.05):
    """
    Procedurally generated 3-channel images of oriented stripes.

    Class c draws stripes at angle pi * c / classes with a class-specific colour
    mix; every image gets a random phase and Gaussian noise. The random phase
    averages the stripes out of the class means, so a linear classifier on raw
    pixels sees only the faint colour offset, while a convolutional model can
    also read the orientation. A label_noise share of the labels in each split
    is reassigned to another class, which keeps held-out accuracy below 1.

    Args:
        classes (int): Number of classes
        per_class (int): Images per class
        size (int): Height and width in pixels, at least 4
        seed (int): Generator seed
        validation_fraction (float): Share of images held out
        contrast (float): Stripe amplitude
        noise (float): Standard deviation of the pixel noise
        offset (float): Strength of the class colour offset
        label_noise (float): Share of reassigned labels per split

    Returns:
        Dataset: Train/validation split
    """
    if size < 4:
        raise ValueError(f"image size must be >= 4, got {size}")
    if classes < 2:
        raise ValueError(f"need at least 2 classes, got {classes}")
    rng = np.random.default_rng(seed)
    ys, xs = np.mgrid[0:size, 0:size].astype(float)
    images = []
    labels = []
    for c in range(classes):
        angle = math.pi * c / classes
        colour = np.array([0.5 + 0.5 * math.cos(2 * math.pi * (c / classes + ch / 3)) for ch in range(3)])
        for _ in range(per_class):
            phase = rng.uniform(0, 2 * math.pi)
            stripes = np.sin(2 * math.pi * 2 * (xs * math.cos(angle) + ys * math.sin(angle)) / size + phase)
            image = contrast * colour[:, None, None] * stripes[None] + offset * colour[:, None, None]
            image = image + noise * rng.standard_normal((3, size, size))
            images.append(image)
            labels.append(c)
    x = np.stack(images)
    y = np.array(labels)
    total = len(y)
    n_val = max(1, int(round(total * validation_fraction)))
    perm = rng.permutation(total)
    val_index = np.sort(perm[:n_val])
    train_index = np.sort(perm[n_val:])
    train_y = _reassign_labels(y[train_index], label_noise, classes, rng)
    val_y = _reassign_labels(y[val_index], label_noise, classes, rng)
    return Dataset(
        train_x=x[train_index],
        train_y=train_y,
        val_x=x[val_index],
        val_y=val_y,
        train_index=train_index,
        val_index=val_index,
        classes=classes,
        size=size,
    )


def _reassign_labels(y, share, classes, rng):
    """Move round(share * len(y)) labels, at least one when share > 0, to a different class"""
    y = y.copy()
    count = min(len(y), max(1, round(share * len(y)))) if share > 0 else 0
    for i in rng.choice(len(y), size=count, replace=False):
        y[i] = (y[i] + rng.integers(1, classes)) % classes
    return y


def accuracy(model, x, y, batch=64):
    correct = 0
    for start in range(0, len(y), batch):
        logits = forward(model, x[start:start + batch], mode="eval")
        correct += int((logits.argmax(axis=1) == y[start:start + batch]).sum())
    return correct / len(y)


def sgd_train(model, dataset, settings):
    """
    Train with momentum SGD on a piecewise-constant learning-rate schedule.

    Args:
        model (Model): Freshly built model, trained in place
        dataset (Dataset): Train/validation split
        settings (TrainerSettings): Steps, batch, schedule, momentum, decay, seed

    Returns:
        tuple: (model, held-out accuracy)

    Raises:
        NumericFailure: if the loss or a gradient becomes non-finite
    """
    rng = np.random.default_rng(settings.seed)
    velocity = {name: np.zeros_like(leaf.params[key]) for name, leaf, key in model.named_parameters()}
    n_train = len(dataset.train_y)
    batch = min(settings.batch, n_train)
    for step in range(settings.steps):
        rate = settings.rate_at(step)
        index = rng.choice(n_train, size=batch, replace=False)
        grads, loss = gradients(model, dataset.train_x[index], dataset.train_y[index], settings.weight_decay)
        for name, leaf, key in model.named_parameters():
            v = velocity[name]
            v *= settings.momentum
            v -= rate * grads[name]
            leaf.params[key] += v
        if step % 50 == 0:
            logger.debug(f"step {step}: loss {loss:.4f} lr {rate:g}")
    return model, accuracy(model, dataset.val_x, dataset.val_y)
