# services/asn/prediction.py
"""
Turning probability maps into semantic change predictions, plain and with
test-time augmentation, and scoring a model over a set of samples.

Probability maps here are plain numpy arrays, channel first: [K, H, W].
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from logzero import logger

from app.constants import TAU
from app.exceptions.custom_exceptions import ConfigError
from app.services.asn.atl import atl_forward
from app.services.metrics.confusion import ChangeTypeIndex, ConfusionMatrix
from app.services.tensor import ops
from app.services.tensor.tensor import Tensor, no_grad

Predictor = Literal["asn", "intuitive"]


@dataclass
class SemanticChangePrediction:
    """pairs [H, W, 2] with (0, 0) for non-change; change_prob [H, W]; sem_probs two [H, W, K] maps."""
    pairs: np.ndarray
    change_prob: np.ndarray
    sem_probs: Tuple[np.ndarray, np.ndarray]

    @property
    def label1(self) -> np.ndarray:
        return self.pairs[..., 0]

    @property
    def label2(self) -> np.ndarray:
        return self.pairs[..., 1]


def compose_prediction(prob1: np.ndarray, prob2: np.ndarray, change_prob: np.ndarray,
                       tau: float = TAU) -> SemanticChangePrediction:
    """(0,0) where change_prob < tau, otherwise the argmax over classes 1..N of each date."""
    changed = change_prob >= tau
    l1 = np.argmax(prob1[1:], axis=0) + 1
    l2 = np.argmax(prob2[1:], axis=0) + 1
    pairs = np.where(changed[..., None], np.stack([l1, l2], axis=-1), 0).astype(np.int64)
    return SemanticChangePrediction(pairs, change_prob, (np.moveaxis(prob1, 0, -1), np.moveaxis(prob2, 0, -1)))


def intuitive_baseline(prob1: np.ndarray, prob2: np.ndarray,
                       mixed_as_nonchange: bool = False) -> SemanticChangePrediction:
    """
    Independent argmax per date over all K classes; equal labels mean no
    change. This is the argmax of the outer product prob1^T x prob2 read off
    per pixel. With `mixed_as_nonchange`, pairs that put the blank class on
    one date only are reported as non-change so they can be scored.
    """
    l1, l2 = np.argmax(prob1, axis=0), np.argmax(prob2, axis=0)
    changed = l1 != l2
    if mixed_as_nonchange:
        changed &= (l1 != 0) & (l2 != 0)
    pairs = np.where(changed[..., None], np.stack([l1, l2], axis=-1), 0).astype(np.int64)
    return SemanticChangePrediction(pairs, changed.astype(np.float64),
                                    (np.moveaxis(prob1, 0, -1), np.moveaxis(prob2, 0, -1)))


def predict_probabilities(model, image1, image2, use_atl: bool = True) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batched probabilities: semantic [N, K, H, W] per date, change [N, H, W]."""
    with no_grad():
        outputs = model(image1, image2)
        m1, m2, c = outputs.m1_raw, outputs.m2_raw, outputs.c_raw
        if use_atl:
            refined = atl_forward(m1, m2, c, model.config.gamma, model.psi1, model.psi2)
            m1, m2, c = refined.m1_raw, refined.m2_raw, refined.c_raw
        change = ops.softmax_array(c.data, axis=1)[:, 1]
        return ops.softmax_array(m1.data, axis=1), ops.softmax_array(m2.data, axis=1), change


def _pad_to(array: np.ndarray, multiple: int) -> np.ndarray:
    height, width = array.shape[2:]
    pad_h, pad_w = -height % multiple, -width % multiple
    if not (pad_h or pad_w):
        return array
    return np.pad(array, [(0, 0), (0, 0), (0, pad_h), (0, pad_w)])


class TTAPredictor:
    """
    Averages per-class probabilities over every (scale, flip) view before
    composing once. Views whose extent breaks the encoder stride are padded
    with zeros and cropped back.
    """

    def __init__(self, model, scales: Sequence[float] = (1.0,), flip: bool = False, use_atl: bool = True,
                 tau: Optional[float] = None):
        if not scales:
            raise ConfigError("test-time augmentation needs at least one scale")
        if any(scale <= 0 for scale in scales):
            raise ConfigError(f"scales must be positive, got {list(scales)}")
        self.model, self.scales, self.flip, self.use_atl = model, list(scales), flip, use_atl
        self.tau = model.config.tau if tau is None else tau
        self.forward_calls = 0

    def views(self) -> List[Tuple[float, bool]]:
        flips = (False, True) if self.flip else (False,)
        return [(scale, flipped) for scale in self.scales for flipped in flips]

    def _view(self, image1: np.ndarray, image2: np.ndarray, scale: float, flipped: bool):
        height, width = image1.shape[2:]
        stride = self.model.config.stride_product
        out_h, out_w = max(1, int(round(height * scale))), max(1, int(round(width * scale)))
        views = []
        for image in (image1, image2):
            view = ops.resize_array(image, out_h, out_w) if (out_h, out_w) != (height, width) else image
            if flipped:
                view = view[..., ::-1]
            views.append(_pad_to(np.ascontiguousarray(view), stride))
        self.forward_calls += 1
        p1, p2, pc = predict_probabilities(self.model, Tensor(views[0]), Tensor(views[1]), self.use_atl)
        restored = []
        for prob in (p1, p2, pc[:, None]):
            prob = prob[..., :out_h, :out_w]
            if flipped:
                prob = prob[..., ::-1]
            if (out_h, out_w) != (height, width):
                prob = ops.resize_array(prob, height, width)
            restored.append(np.asarray(prob, dtype=np.float64))
        return restored[0], restored[1], restored[2][:, 0]

    def probabilities(self, image1, image2) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        image1 = image1.data if isinstance(image1, Tensor) else np.asarray(image1, dtype=np.float64)
        image2 = image2.data if isinstance(image2, Tensor) else np.asarray(image2, dtype=np.float64)
        totals = None
        views = self.views()
        for scale, flipped in views:
            probs = self._view(image1, image2, scale, flipped)
            totals = list(probs) if totals is None else [total + prob for total, prob in zip(totals, probs)]
        if len(views) == 1:
            return totals[0], totals[1], totals[2]
        return tuple(total / len(views) for total in totals)

    def predict(self, image1, image2, predictor: Predictor = "asn") -> List[SemanticChangePrediction]:
        p1, p2, pc = self.probabilities(image1, image2)
        if predictor == "intuitive":
            return [intuitive_baseline(p1[n], p2[n], mixed_as_nonchange=True) for n in range(p1.shape[0])]
        return [compose_prediction(p1[n], p2[n], pc[n], self.tau) for n in range(p1.shape[0])]


def tta_predict(model, image1, image2, scales: Sequence[float] = (1.0,), use_flip: bool = False,
                use_atl: bool = True, tau: Optional[float] = None) -> List[SemanticChangePrediction]:
    return TTAPredictor(model, scales, use_flip, use_atl, tau).predict(image1, image2)


def to_batch(images: Iterable[np.ndarray]) -> np.ndarray:
    """Stack H x W x d images into an [N, d, H, W] batch."""
    return np.stack([np.moveaxis(np.asarray(image, dtype=np.float64), -1, 0) for image in images])


def evaluate_records(model, records: Sequence, index: ChangeTypeIndex, scales: Sequence[float] = (1.0,),
                     flip: bool = False, predictor: Predictor = "asn", use_atl: bool = True,
                     workers: int = 1) -> ConfusionMatrix:
    """Confusion matrix of the model's predictions over `records`; shards merge across workers."""

    def score(record) -> ConfusionMatrix:
        tta = TTAPredictor(model, scales, flip, use_atl)
        prediction = tta.predict(to_batch([record.image1]), to_batch([record.image2]), predictor)[0]
        return ConfusionMatrix.for_index(index).accumulate(prediction.pairs, record.pair_map(), index)

    matrix = ConfusionMatrix.for_index(index)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            shards = list(pool.map(score, records))
    else:
        shards = [score(record) for record in records]
    for shard in shards:
        matrix = matrix.merge(shard)
    logger.info(f"Evaluated {len(records)} samples with predictor={predictor}, views={len(scales) * (2 if flip else 1)}")
    return matrix
