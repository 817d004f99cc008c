# Tests for predictions, ensembling, scoring and the CLI
