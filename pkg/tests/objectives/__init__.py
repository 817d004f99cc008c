# Tests for losses and challenge metrics
