# pepforge core: errors, tensor/autodiff, layers, denoisers, optimizer, checkpoints, pipeline
