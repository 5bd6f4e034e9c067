"""HMM word representations for domain-adapted sequence tagging."""

from .corpus import (CorpusError, LabeledSequence, Tagset, TokenSequence,
                     UNIVERSAL_TAGS, UNK_FORM, Vocabulary, build_vocabulary,
                     default_tagset, encode, load_vocabulary, oov_mask,
                     read_conll, read_sentences, save_vocabulary,
                     write_conll, write_sentences)
from .hmm import (DIAGNOSTICS, HmmError, HmmModel, default_k,
                  forward_backward, joint_log_probability,
                  kbest_forward_backward, load_hmm, save_hmm, viterbi)
from .hmm_train import (SufficientStats, TrainConfig, TrainError,
                        corpus_log_likelihood, expectation_step, init_model,
                        maximization_step, online_update, train_hmm)
from .representations import (REP_DISPLAY, REP_KINDS, Representation,
                              RepresentationError, RepresentationProvider,
                              TypeRepTable, both_features, build_type_table,
                              load_typerep, lookup_type_features,
                              posterior_token_features, save_typerep,
                              viterbi_features)
from .crf import (CrfError, CrfModel, FeatureTemplateConfig, TrainOptions,
                  crf_log_likelihood, decode, extract_features, load_crf,
                  save_crf, tag_sequence, template_for_provider, train_crf)
from .pipeline import (CurvePoint, DomainData, EvalReport, ExperimentConfig,
                       PipelineError, SynthConfig, evaluate,
                       make_synthetic_domains, run_learning_curve, run_table1)

__version__ = "0.1.0"
