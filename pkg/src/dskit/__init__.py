"""Weak-supervision anonymization and structured extraction for
OCR-tokenized discharge summaries.

Subpackage map: ``docmodel`` (tokens, ingestion, rendering), ``lfkit``
(labeling functions and the vote matrix), ``labelmodel`` (joint
reliability + feature model), ``anonymizer`` (masking and the serial
registry), ``fieldex`` (heading-based field extraction), ``promptex``
(templated yes/no prompting), ``evalkit`` (metric battery), ``synthcorpus``
(planted-ground-truth test corpus), ``orchestrator``/``service``/``cli``
(batch runs and the HTTP console backend).
"""

from .docmodel import (BBox, ClassLabel, Document, Token,
                       parse_ocr_document, render_text, serialize_document)
from .lfkit import (ABSTAIN, AdjacencyRule, LFSet, LabelMatrix,
                    LabelingFunction, PositionRule, apply_lf,
                    build_label_matrix, coverage_stats, default_lfset)
from .labelmodel import (FeatureParams, GraphicalParams, LabelModelParams,
                         TrainingConfig, feature_posterior, featurize,
                         graphical_posterior, load_checkpoint, predict,
                         save_checkpoint, train)
from .anonymizer import AnonymizedDocument, SerialRegistry, anonymize, verify_clean
from .fieldex import (ExtractionRecord, HeadingConfig, default_heading_config,
                      extract_fields, normalize_record, records_to_csv)
from .promptex import (FeatureAnswers, LlmConfig, MockTransport, PromptTemplate,
                       build_prompt, default_template, extract_features,
                       format_answers, parse_answers)
from .evalkit import (ConfusionCounts, MetricRow, cohen_kappa, confusion,
                      metric_row, reconcile_table_row, resolve_ground_truth)
from .synthcorpus import CorpusSpec, GroundTruth, generate_corpus, oracle_answers

__version__ = "0.1.0"
