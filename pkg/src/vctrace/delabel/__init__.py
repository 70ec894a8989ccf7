"""Differential-expression labeling: pseudobulk counts, per-gene NB GLM,
Wald tests, BH adjustment, gene labels, QA examples, and splits."""
