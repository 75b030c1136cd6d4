"losses, optimizer, checkpoints, training, evaluation, ablation and the CLI"
