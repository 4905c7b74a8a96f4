# Test package for the kernel approximation toolkit
