# Tests for the network, its parameters and checkpoints
