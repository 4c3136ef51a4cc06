# pepforge generation: noise schedule, structure and sequence diffusion, training loop
