"""
Compressing a 4-layer teacher into a 2-layer student
====================================================

The student copies the teacher's embeddings, label embeddings, classifier
head and first two encoder layers, then learns to match the teacher's
softened class distribution.
"""
from lesa import (DistillConfig, ModelConfig, Rng, build_vocab, distill_train, evaluate,
                  init_model, make_student, param_count, split, train_supervised)
from lesa.cli import time_inference
from lesa.synthetic import KEYWORDS, make_dataset

data = make_dataset(n_messages=600, vocab_size=200, seed=0)
train_set, test_set = split(data, 0.2, Rng(0))
vocab = build_vocab(train_set)

cfg = ModelConfig(n_layers=4, d_model=32, d_head=8, n_heads=4, d_ff=64, mode="lesa", seed=2)
teacher = init_model(cfg, vocab, data.label_names, KEYWORDS, Rng(2))
train_supervised(teacher, train_set, lr=1e-3, epochs=5, batch_size=8, seed=2)

dcfg = DistillConfig(n_student_layers=2, temperature=2.0, epochs=3, seed=2)
student = make_student(teacher, dcfg)
print("student F1 before distillation:", round(evaluate(student, test_set)["macro_f1"], 3))
log = distill_train(teacher, student, train_set, dcfg)
print("distillation loss per epoch:", [round(e["train_loss"], 4) for e in log["epochs"]])

t_f1, s_f1 = evaluate(teacher, test_set)["macro_f1"], evaluate(student, test_set)["macro_f1"]
print(f"teacher F1 {t_f1:.3f}, student F1 {s_f1:.3f}, retention {s_f1 / t_f1:.1%}")
print(f"parameters: {param_count(teacher)} -> {param_count(student)} "
      f"({param_count(student) / param_count(teacher):.2f}x)")
t_t, t_s = time_inference(teacher, test_set.texts), time_inference(student, test_set.texts)
print(f"batch-1 inference over {len(test_set)} messages: {t_t:.2f}s -> {t_s:.2f}s")
