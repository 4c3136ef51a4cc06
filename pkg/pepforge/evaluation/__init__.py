# pepforge evaluation: structure, sequence and distribution metrics, reports
