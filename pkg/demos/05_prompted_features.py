"""Templated yes/no prompting against a pluggable transport.

The default template asks twelve fixed clinical questions about the course
narrative.  Every document is queried twice; under the deterministic mock
the runs agree perfectly, and a scripted divergence shows up as a
per-question disagreement flag.  Live endpoints are a config swap
(HttpTransport), never a code change.
"""

from dskit.promptex import (LlmConfig, MockTransport, build_prompt,
                            default_template, extract_features, format_answers,
                            parse_answers)
from dskit.synthcorpus import CorpusSpec, generate_corpus, oracle_answers

template = default_template()
payloads, truths = generate_corpus(CorpusSpec(n_docs=2, seed=5))
gt = truths[0]
course = gt.fields["course_in_hospital"]

print("--- rendered prompt (truncated) --------------------------------")
print(build_prompt(template, course)[:400], "...\n")

# the mock transport is scripted from the generator's oracle answers
scripts = {t.doc_id: format_answers(oracle_answers(t)) for t in truths}
mock = MockTransport(scripts)
run1, run2, agreement = extract_features(gt.doc_id, course, template,
                                         LlmConfig(), mock)
print("run 1:", run1.answers)
print("run 2:", run2.answers)
print("agreement:", all(agreement), f"(transport calls: {mock.calls})")
assert run1.answers == oracle_answers(gt)

# flexible answer formats parse to the same vector
assert parse_answers("2) NO\n1: yes", 2) == ["YES", "NO"]

# a planted run divergence is flagged on exactly the affected question
flipped = oracle_answers(gt).copy()
flipped[2] = "YES" if flipped[2] == "NO" else "NO"
diverging = MockTransport({gt.doc_id: [format_answers(oracle_answers(gt)),
                                       format_answers(flipped)]})
_, _, agreement = extract_features(gt.doc_id, course, template,
                                   LlmConfig(), diverging)
print("\nplanted divergence ->",
      [i + 1 for i, ok in enumerate(agreement) if not ok])
