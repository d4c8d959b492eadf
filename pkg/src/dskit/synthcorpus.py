"""Synthetic discharge-summary corpus with fully planted ground truth.

Every generated document follows the standard layout: a header block in the
top 15% of page 1 carrying all the PHI (names, a patient id repeated in the
top-right corner, a location), then the nine regular field sections, then a
free-text course section assembled from per-feature sentence templates.  A
feature's sentence appears iff its flag is set, and template vocabularies
are keyword-disjoint across features so each flag is independently
recoverable from the text.

Documents are emitted as OCR-JSON on a virtual monospaced A4 grid, so boxes
are synthesized deterministically and the emission order coincides with the
parser's reading order.  Generation is pure given the seed; per-document
seeds are derived, so parallel generation stays reproducible.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .docmodel import ClassLabel

# --- lexicons (fictional; zero real-PHI risk) ---------------------------------

FIRST_NAMES = (
    "Marisol", "Tavian", "Orielle", "Brexton", "Yelena", "Kaspar", "Ilaria",
    "Dmitri", "Anwen", "Tobias", "Selina", "Farrokh", "Nadira", "Emeric",
    "Lucinda", "Hollis",
)
LAST_NAMES = (
    "Vexley", "Okonkwo", "Bramwell", "Castellan", "Norwood", "Ferreira",
    "Albescu", "Quintrell", "Harlowe", "Maddox", "Szabo", "Winterbourne",
    "Delacroix", "Ivanov", "Pemberton", "Aldercott",
)
CITIES = (
    "Braelford", "Westmere", "Calderon", "Northgate", "Silverton", "Eastvale",
    "Mirefield", "Dunmorrow", "Ashcombe", "Veridia", "Larkspur", "Coldwater",
    "Greymoor", "Thornbury", "Lake Verity", "Port Ellison",
)

# --- clinical feature templates ------------------------------------------------

# Key order matches the default prompt's question order.
FEATURE_KEYS = (
    "nephrologist_consult",
    "aki_mentioned",
    "general_anaesthesia",
    "hypertension",
    "fluid_restriction",
    "angiography",
    "diuretic",
    "contrast_imaging",
    "icu_admission",
    "ventilator",
    "tachycardia",
    "oxygen_desaturation",
)

# Marker vocabulary per feature; markers appear in every variant of their
# feature and nowhere else (checked by tests), so regex-free recovery of one
# flag can never piggyback on another.
FEATURE_MARKERS: dict[str, tuple[str, ...]] = {
    "nephrologist_consult": ("nephrology", "nephrologist"),
    "aki_mentioned": ("acute kidney injury",),
    "general_anaesthesia": ("anaesthesia",),
    "hypertension": ("hypertension",),
    "fluid_restriction": ("fluid",),
    "angiography": ("angiography",),
    "diuretic": ("diuretic",),
    "contrast_imaging": ("contrast",),
    "icu_admission": ("icu", "intensive care"),
    "ventilator": ("ventilator", "ventilation", "ventilatory"),
    "tachycardia": ("tachycardia",),
    "oxygen_desaturation": ("oxygen saturation", "desaturation"),
}

FEATURE_SENTENCES: dict[str, tuple[str, ...]] = {
    "nephrologist_consult": (
        "Nephrology was consulted during the admission.",
        "A nephrologist reviewed the case on day 2.",
        "Opinion from the nephrology team was obtained.",
    ),
    "aki_mentioned": (
        "The picture was consistent with acute kidney injury.",
        "Acute kidney injury was documented during the stay.",
        "Worsening parameters suggested acute kidney injury.",
    ),
    "general_anaesthesia": (
        "The procedure was carried out under general anaesthesia.",
        "General anaesthesia was administered in theatre.",
        "Induction with general anaesthesia proceeded uneventfully.",
    ),
    "hypertension": (
        "The patient is a known case of hypertension.",
        "Hypertension was noted as a pre-existing condition.",
        "Long-standing hypertension was recorded in the background.",
    ),
    "fluid_restriction": (
        "Fluid restriction was advised at 1.5 litres per day.",
        "Advised to restrict fluid intake strictly.",
        "A restricted fluid allowance was enforced.",
    ),
    "angiography": (
        "Coronary angiography was performed on day 3.",
        "Angiography revealed no flow-limiting lesion.",
        "The patient underwent angiography without complication.",
    ),
    "diuretic": (
        "Intravenous diuretic therapy was initiated.",
        "A loop diuretic was continued through the stay.",
        "Diuretic dosing was titrated to response.",
    ),
    "contrast_imaging": (
        "Imaging with contrast dye was carried out.",
        "A contrast-enhanced study was obtained.",
        "Contrast was administered for the study.",
    ),
    "icu_admission": (
        "The patient was shifted to the ICU for closer observation.",
        "ICU admission was required overnight.",
        "Care was escalated to the intensive care unit.",
    ),
    "ventilator": (
        "The patient was put on a ventilator.",
        "Mechanical ventilation was instituted.",
        "Ventilatory support was required for two days.",
    ),
    "tachycardia": (
        "An episode of tachycardia was recorded.",
        "Tachycardia developed on the second night.",
        "Sustained tachycardia was observed at the bedside.",
    ),
    "oxygen_desaturation": (
        "A drop in oxygen saturation was observed.",
        "Oxygen saturation dipped to 88 percent.",
        "Desaturation episodes were noted on room air.",
    ),
}

FILLER_SENTENCES = (
    "The patient remained afebrile through the stay.",
    "Vitals were otherwise stable on the ward.",
    "Diet was advanced as tolerated.",
    "Physiotherapy sessions were completed daily.",
    "The family was counselled about home care.",
    "Wound review showed satisfactory healing.",
)

# --- regular field content -----------------------------------------------------

FIELD_ORDER = (
    "date_of_admission", "date_of_discharge", "diagnosis", "chief_complaints",
    "past_history", "significant_findings", "investigations",
    "medications_in_stay", "medications_on_discharge", "course_in_hospital",
)

FIELD_HEADINGS = {
    "date_of_admission": "DATE OF ADMISSION",
    "date_of_discharge": "DATE OF DISCHARGE",
    "diagnosis": "DIAGNOSIS",
    "chief_complaints": "CHIEF COMPLAINTS",
    "past_history": "PAST HISTORY",
    "significant_findings": "SIGNIFICANT FINDINGS",
    "investigations": "INVESTIGATIONS",
    "medications_in_stay": "MEDICATIONS DURING STAY",
    "medications_on_discharge": "MEDICATIONS ON DISCHARGE",
    "course_in_hospital": "COURSE IN HOSPITAL",
}

_DIAGNOSES = (
    "Dengue fever with warning signs",
    "Community acquired pneumonia",
    "Acute gastroenteritis with dehydration",
    "Cellulitis of the left leg",
    "Urinary tract infection",
)
_COMPLAINTS = (
    "Fever and chills for 3 days",
    "Breathlessness on exertion",
    "Abdominal pain and vomiting",
    "Swelling of the left leg",
    "Burning micturition for 2 days",
)
_HISTORIES = (
    "No significant past illness",
    "Type 2 diabetes on oral agents",
    "Asthma in childhood",
    "Appendicectomy in 2015",
)
_FINDINGS = (
    "Pallor present with mild dehydration",
    "Crepitations over the right base",
    "Tenderness in the right iliac fossa",
    "Pitting oedema of the left leg",
)
_INVESTIGATIONS = (
    "CBC, LFT and renal panel within limits",
    "Chest radiograph reviewed on admission",
    "Urine culture sent on admission",
    "Serial counts monitored daily",
)
_MEDS_STAY = (
    "Inj Ceftriaxone 1g twice daily; Tab Paracetamol 650mg",
    "IV crystalloids as charted; Inj Pantoprazole 40mg",
    "Tab Azithromycin 500mg once daily",
)
_MEDS_DISCHARGE = (
    "Tab Paracetamol 650mg as needed",
    "Tab Amoxicillin 500mg for 5 days",
    "Tab Pantoprazole 40mg before breakfast",
)

# --- virtual page geometry ------------------------------------------------------

PAGE_W, PAGE_H = 595.0, 842.0
CHAR_W, GLYPH_H, LINE_H = 6.0, 10.0, 14.0
MARGIN = 36.0
BODY_START_Y = 140.0  # clear of the 15% header band


@dataclass(frozen=True)
class CorpusSpec:
    n_docs: int
    seed: int = 0
    phi_density: float = 8.0
    feature_prevalence: float | Mapping[str, float] = 0.3
    empty_course_rate: float = 0.0

    def __post_init__(self):
        if self.n_docs < 1:
            raise ValueError("n_docs must be >= 1")
        if not 0.0 <= self.empty_course_rate <= 1.0:
            raise ValueError("empty_course_rate must be in [0, 1]")
        for key in FEATURE_KEYS:
            p = self.prevalence(key)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"prevalence for {key} must be in [0, 1]")

    def prevalence(self, feature: str) -> float:
        if isinstance(self.feature_prevalence, Mapping):
            return float(self.feature_prevalence.get(feature, 0.0))
        return float(self.feature_prevalence)


@dataclass
class GroundTruth:
    doc_id: str
    labels: list[ClassLabel]
    fields: dict[str, str]
    flags: dict[str, bool]
    patient_id: str
    phi_strings: set[str] = field(default_factory=set)


def oracle_answers(gt: GroundTruth) -> list[str]:
    """The 12 YES/NO answers implied by the planted flags, in the default
    prompt's question order.  Scripts the mock transport and serves as truth
    for validation."""
    return ["YES" if gt.flags[key] else "NO" for key in FEATURE_KEYS]


class _PageWriter:
    def __init__(self):
        self.words: list[list[dict]] = [[]]
        self.labels: list[ClassLabel] = []
        self.page = 0
        self.y = MARGIN

    def _bbox(self, x: float, width: float) -> list[float]:
        return [x / PAGE_W, self.y / PAGE_H,
                (x + width) / PAGE_W, (self.y + GLYPH_H) / PAGE_H]

    def put(self, text: str, label: ClassLabel, x: float) -> float:
        width = len(text) * CHAR_W
        self.words[self.page].append({"text": text, "bbox": self._bbox(x, width)})
        self.labels.append(label)
        return x + width + CHAR_W

    def newline(self, n: int = 1) -> None:
        self.y += LINE_H * n
        if self.y + GLYPH_H > PAGE_H - MARGIN:
            self.page += 1
            self.words.append([])
            self.y = MARGIN

    def flow(self, items: list[tuple[str, ClassLabel]], x: float = MARGIN) -> None:
        """Write labeled words left to right, wrapping at the right margin."""
        for text, label in items:
            width = len(text) * CHAR_W
            if x + width > PAGE_W - MARGIN:
                self.newline()
                x = MARGIN
            x = self.put(text, label, x)
        self.newline()


def _labeled(text: str, label: ClassLabel) -> list[tuple[str, ClassLabel]]:
    return [(w, label) for w in text.split()]


def _other(text: str) -> list[tuple[str, ClassLabel]]:
    return _labeled(text, ClassLabel.OTHER)


def _generate_one(doc_id: str, rng: np.random.Generator, spec: CorpusSpec,
                  empty_course: bool) -> tuple[bytes, GroundTruth]:
    pick = lambda options: options[int(rng.integers(len(options)))]

    first, last = pick(FIRST_NAMES), pick(LAST_NAMES)
    att_first, att_last = pick(FIRST_NAMES), pick(LAST_NAMES)
    city = pick(CITIES)
    patient_id = f"MRN{rng.integers(0, 10**6):06d}"
    phi: set[str] = {first, last, att_first, att_last, patient_id}
    phi.update(city.split())

    w = _PageWriter()

    # header block: all PHI lives here, within the top 15% of page 1
    title_x = w.put("DISCHARGE", ClassLabel.OTHER, MARGIN)
    w.put("SUMMARY", ClassLabel.OTHER, title_x)
    corner_x = PAGE_W - MARGIN - len(patient_id) * CHAR_W
    w.put(patient_id, ClassLabel.PATIENT_ID, corner_x)
    w.newline()
    w.flow(_other("Patient Name:") + _labeled(f"{first} {last}", ClassLabel.NAME))
    w.flow(_other("Patient ID:") + [(patient_id, ClassLabel.PATIENT_ID)])
    w.flow(_other("Location:") + _labeled(city, ClassLabel.LOCATION))
    w.flow(_other("Attending: Dr.")
           + _labeled(f"{att_first} {att_last}", ClassLabel.NAME))
    # expected base PHI per doc is 7.125 tokens; an optional referral line
    # (3.125 expected) tops the count up to the configured density
    p_referral = min(max((spec.phi_density - 7.125) / 3.125, 0.0), 1.0)
    if rng.random() < p_referral:
        ref_first, ref_last = pick(FIRST_NAMES), pick(LAST_NAMES)
        ref_city = pick(CITIES)
        phi.update({ref_first, ref_last})
        phi.update(ref_city.split())
        w.flow(_other("Referred by Dr.")
               + _labeled(f"{ref_first} {ref_last}", ClassLabel.NAME)
               + _other("from") + _labeled(ref_city, ClassLabel.LOCATION)
               + _other("clinic"))

    w.y = BODY_START_Y

    # regular fields
    adm_day, adm_mon = int(rng.integers(1, 28)), int(rng.integers(1, 12))
    fields: dict[str, str] = {
        "date_of_admission": f"{adm_day:02d}/{adm_mon:02d}/2023",
        "date_of_discharge": f"{int(rng.integers(1, 28)):02d}/{min(adm_mon + 1, 12):02d}/2023",
        "diagnosis": pick(_DIAGNOSES),
        "chief_complaints": pick(_COMPLAINTS),
        "past_history": pick(_HISTORIES),
        "significant_findings": pick(_FINDINGS),
        "investigations": pick(_INVESTIGATIONS),
        "medications_in_stay": pick(_MEDS_STAY),
        "medications_on_discharge": pick(_MEDS_DISCHARGE),
    }
    for name in FIELD_ORDER[:-1]:
        w.flow(_other(FIELD_HEADINGS[name]) + _other(fields[name]))

    # course section governed by the feature flags
    flags = {key: (not empty_course and rng.random() < spec.prevalence(key))
             for key in FEATURE_KEYS}
    sentences = [pick(FEATURE_SENTENCES[key]) for key in FEATURE_KEYS if flags[key]]
    n_filler = int(rng.integers(2, 5))
    filler_idx = rng.choice(len(FILLER_SENTENCES), size=n_filler, replace=False)
    sentences.extend(FILLER_SENTENCES[i] for i in filler_idx)
    order = rng.permutation(len(sentences))
    course = "" if empty_course else " ".join(sentences[i] for i in order)
    fields["course_in_hospital"] = course

    w.flow(_other(FIELD_HEADINGS["course_in_hospital"]))
    if course:
        w.flow(_other(course))

    payload = {
        "doc_id": doc_id,
        "pages": [{"width_px": PAGE_W, "height_px": PAGE_H, "words": page}
                  for page in w.words],
    }
    gt = GroundTruth(doc_id=doc_id, labels=w.labels, fields=fields,
                     flags=flags, patient_id=patient_id, phi_strings=phi)
    return json.dumps(payload, ensure_ascii=False).encode("utf-8"), gt


def generate_corpus(spec: CorpusSpec) -> tuple[list[bytes], list[GroundTruth]]:
    """Generate OCR-JSON payloads plus their ground truth.

    Exactly ``round(empty_course_rate * n_docs)`` documents get an empty
    course section (flags forced absent there).  Identical bytes come back
    for identical specs.
    """
    root = np.random.SeedSequence(spec.seed)
    n_empty = round(spec.empty_course_rate * spec.n_docs)
    selector = np.random.default_rng(root.spawn(1)[0])
    empty_idx = set(selector.choice(spec.n_docs, size=n_empty, replace=False).tolist()) \
        if n_empty else set()
    payloads: list[bytes] = []
    truths: list[GroundTruth] = []
    for i, child in enumerate(root.spawn(spec.n_docs + 1)[1:]):
        doc_id = f"synth-{i:04d}"
        rng = np.random.default_rng(child)
        payload, gt = _generate_one(doc_id, rng, spec, empty_course=i in empty_idx)
        payloads.append(payload)
        truths.append(gt)
    return payloads, truths


# --- on-disk corpus -------------------------------------------------------------

def write_corpus(spec: CorpusSpec, out_dir: str | Path) -> tuple[list[Path], Path]:
    """Write <doc_id>.json files plus ground-truth CSVs under ground_truth/.

    Returns the document paths and the ground-truth directory.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gt_dir = out / "ground_truth"
    gt_dir.mkdir(exist_ok=True)
    payloads, truths = generate_corpus(spec)

    doc_paths = []
    for payload, gt in zip(payloads, truths):
        path = out / f"{gt.doc_id}.json"
        path.write_bytes(payload)
        doc_paths.append(path)

    with open(gt_dir / "labels.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["doc_id", "token_id", "label"])
        for gt in truths:
            for tid, label in enumerate(gt.labels):
                writer.writerow([gt.doc_id, tid, label.name])

    with open(gt_dir / "fields.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["doc_id", *FIELD_ORDER])
        for gt in truths:
            writer.writerow([gt.doc_id] + [gt.fields[f] for f in FIELD_ORDER])

    with open(gt_dir / "flags.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["doc_id", "feature", "value"])
        for gt in truths:
            for key in FEATURE_KEYS:
                writer.writerow([gt.doc_id, key, "YES" if gt.flags[key] else "NO"])

    with open(gt_dir / "phi.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["doc_id", "phi_string"])
        for gt in truths:
            for s in sorted(gt.phi_strings):
                writer.writerow([gt.doc_id, s])

    return doc_paths, gt_dir


def load_flags_csv(path: str | Path) -> dict[str, dict[str, bool]]:
    """Read flags.csv back into {doc_id: {feature: bool}}."""
    out: dict[str, dict[str, bool]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["doc_id"], {})[row["feature"]] = row["value"] == "YES"
    return out


def load_phi_csv(path: str | Path) -> dict[str, set[str]]:
    out: dict[str, set[str]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["doc_id"], set()).add(row["phi_string"])
    return out


def load_labels_csv(path: str | Path) -> dict[str, dict[int, ClassLabel]]:
    out: dict[str, dict[int, ClassLabel]] = {}
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(row["doc_id"], {})[int(row["token_id"])] = \
                ClassLabel[row["label"]]
    return out
