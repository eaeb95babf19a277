"""Post-training quantization for adder (l1-norm) convolutional networks."""
