# Tests for affectdan utility functions
