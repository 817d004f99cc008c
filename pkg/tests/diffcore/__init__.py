# Tests for the affectdan tensor engine
