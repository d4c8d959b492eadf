import json

import pytest

from dskit.docmodel import parse_ocr_document
from dskit.labelmodel import TrainingConfig

# training recipe calibrated for the synthetic corpus (the dataclass defaults
# keep the published fine-tuning rates, which assume a pretrained feature model)
RECIPE = dict(epochs=20, lr_feature=0.1, lr_graphical=0.01, kl_weight=0.1,
              batch_size=32)


def recipe_config(**overrides) -> TrainingConfig:
    kw = dict(RECIPE)
    kw.update(overrides)
    return TrainingConfig(**kw)


def payload_from_words(doc_id, pages):
    """OCR-JSON bytes from [[(text, (x0, y0, x1, y1)), ...] per page]."""
    return json.dumps({
        "doc_id": doc_id,
        "pages": [{"words": [{"text": t, "bbox": list(b)} for t, b in page]}
                  for page in pages],
    }).encode("utf-8")


def doc_from_words(doc_id, pages):
    return parse_ocr_document(payload_from_words(doc_id, pages))


def line_words(texts, y=0.1, x0=0.05, width=0.04, gap=0.01, height=0.02):
    """One visual line of words on a synthetic grid."""
    words = []
    x = x0
    for t in texts:
        words.append((t, (x, y, x + width, y + height)))
        x += width + gap
    return words


@pytest.fixture(scope="session")
def small_corpus():
    from dskit.synthcorpus import CorpusSpec, generate_corpus

    payloads, truths = generate_corpus(CorpusSpec(n_docs=30, seed=202))
    docs = [parse_ocr_document(p) for p in payloads]
    return docs, truths
