# Tests for manifests, images, augmentation and sampling
