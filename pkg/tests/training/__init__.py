# Tests for the optimizer and training loop
