// Copyright 2026 The lmslice Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmslice/sae.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "lmslice/aligner.hpp"
#include "lmslice/corpus.hpp"
#include "lmslice/detail/le_io.hpp"

namespace lmslice::sae {

namespace {

void require_rows(const Matrix& x, std::size_t d_in, const char* what) {
  if (static_cast<std::size_t>(x.cols()) != d_in) {
    throw ShapeError(std::string(what) + ": input has " + std::to_string(x.cols()) +
                     " columns, expected d_in=" + std::to_string(d_in));
  }
}

Matrix gather_rows(const DataMatrix& data, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), data.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) =
        data.row(static_cast<Eigen::Index>(rows[i])).cast<double>();
  }
  return out;
}

Matrix block_rows(const DataMatrix& data, Eigen::Index begin, Eigen::Index count) {
  return data.middleRows(begin, count).cast<double>();
}

bool all_finite(const SaeParams& p) {
  return p.w_enc.allFinite() && p.b_enc.allFinite() && p.w_dec.allFinite() &&
         p.b_dec.allFinite();
}

template <typename Derived>
void adamw_update(Eigen::MatrixBase<Derived>& param, const Eigen::MatrixBase<Derived>& grad,
                  Eigen::MatrixBase<Derived>& m, Eigen::MatrixBase<Derived>& v,
                  const TrainConfig& cfg, double bias1, double bias2) {
  m.derived() = cfg.beta1 * m.derived() + (1.0 - cfg.beta1) * grad.derived();
  v.derived() = cfg.beta2 * v.derived() +
                (1.0 - cfg.beta2) * grad.derived().cwiseProduct(grad.derived());
  if (cfg.weight_decay != 0.0) param.derived() *= (1.0 - cfg.learning_rate * cfg.weight_decay);
  auto m_hat = (m.derived().array() / bias1);
  auto v_hat = (v.derived().array() / bias2);
  param.derived().array() -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
}

Vector random_unit(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector u(static_cast<Eigen::Index>(dim));
  double norm = 0.0;
  while (norm < 1e-12) {
    for (Eigen::Index i = 0; i < u.size(); ++i) u[i] = normal(rng);
    norm = u.norm();
  }
  return u / norm;
}

}  // namespace

// ---------------------------------------------------------------------------
// Parameters and configuration

SaeParams SaeParams::zeros(std::size_t d_in, std::size_t d_hid) {
  const auto in = static_cast<Eigen::Index>(d_in);
  const auto hid = static_cast<Eigen::Index>(d_hid);
  return {Matrix::Zero(hid, in), Vector::Zero(hid), Matrix::Zero(hid, in), Vector::Zero(in)};
}

void SaeParams::validate() const {
  if (w_dec.rows() != w_enc.rows() || w_dec.cols() != w_enc.cols() ||
      b_enc.size() != w_enc.rows() || b_dec.size() != w_enc.cols()) {
    throw ShapeError("inconsistent SAE parameter shapes");
  }
  if (!all_finite(*this)) throw TrainError("non-finite SAE parameters");
}

bool SaeParams::operator==(const SaeParams& o) const {
  auto same = [](const auto& a, const auto& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::equal(a.data(), a.data() + a.size(), b.data());
  };
  return same(w_enc, o.w_enc) && same(b_enc, o.b_enc) && same(w_dec, o.w_dec) &&
         same(b_dec, o.b_dec);
}

void TrainConfig::validate() const {
  if (d_in == 0 || d_hid == 0) throw ShapeError("d_in and d_hid must be positive");
  if (k == 0 || k > d_hid) throw ShapeError("k must satisfy 0 < k <= d_hid");
  if (batch_size == 0) throw ShapeError("batch_size must be >= 1");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw TrainError("beta1 and beta2 must lie in (0, 1)");
  }
  if (!(learning_rate > 0.0)) throw TrainError("learning_rate must be positive");
  if (!(adam_epsilon > 0.0)) throw TrainError("adam_epsilon must be positive");
  if (weight_decay < 0.0) throw TrainError("weight_decay must be >= 0");
  if (!(eval_fraction >= 0.0 && eval_fraction < 1.0)) {
    throw TrainError("eval_fraction must lie in [0, 1)");
  }
}

OptimizerState OptimizerState::for_params(const SaeParams& p) {
  return {SaeParams::zeros(p.d_in(), p.d_hid()), SaeParams::zeros(p.d_in(), p.d_hid()), 0};
}

SaeParams init_params(std::size_t d_in, std::size_t d_hid, Rng& rng) {
  SaeParams p = SaeParams::zeros(d_in, d_hid);
  for (std::size_t j = 0; j < d_hid; ++j) {
    Vector u = random_unit(d_in, rng);
    p.w_dec.row(static_cast<Eigen::Index>(j)) = u.transpose();
    p.w_enc.row(static_cast<Eigen::Index>(j)) = u.transpose();
  }
  return p;
}

// ---------------------------------------------------------------------------
// Forward pass

Vector encode(const Vector& x, const SaeParams& p) {
  if (static_cast<std::size_t>(x.size()) != p.d_in()) {
    throw ShapeError("encode: input length " + std::to_string(x.size()) + " != d_in " +
                     std::to_string(p.d_in()));
  }
  return (p.w_enc * x + p.b_enc).cwiseMax(0.0);
}

Matrix encode_batch(const Matrix& x, const SaeParams& p) {
  require_rows(x, p.d_in(), "encode_batch");
  Matrix pre = x * p.w_enc.transpose();
  pre.rowwise() += p.b_enc.transpose();
  return pre.cwiseMax(0.0);
}

Matrix batch_topk(const Matrix& a, std::size_t k) {
  if (k > static_cast<std::size_t>(a.cols())) {
    throw ShapeError("batch_topk: k=" + std::to_string(k) + " exceeds d_hid=" +
                     std::to_string(a.cols()));
  }
  const std::size_t total = static_cast<std::size_t>(a.size());
  const std::size_t budget = static_cast<std::size_t>(a.rows()) * k;
  const double* values = a.data();  // row-major, so flat index = row * cols + col

  std::vector<std::size_t> positive;
  positive.reserve(std::min(total, budget * 2 + 16));
  for (std::size_t i = 0; i < total; ++i) {
    if (values[i] > 0.0) positive.push_back(i);
  }

  Matrix out = Matrix::Zero(a.rows(), a.cols());
  double* dst = out.data();
  if (positive.size() > budget) {
    auto before = [values](std::size_t l, std::size_t r) {
      return values[l] > values[r] || (values[l] == values[r] && l < r);
    };
    if (budget == 0) return out;
    std::nth_element(positive.begin(), positive.begin() + static_cast<std::ptrdiff_t>(budget - 1),
                     positive.end(), before);
    positive.resize(budget);
  }
  for (auto i : positive) dst[i] = values[i];
  return out;
}

Vector decode(const Vector& f, const SaeParams& p) {
  if (static_cast<std::size_t>(f.size()) != p.d_hid()) {
    throw ShapeError("decode: code length " + std::to_string(f.size()) + " != d_hid " +
                     std::to_string(p.d_hid()));
  }
  return p.w_dec.transpose() * f + p.b_dec;
}

Matrix decode_batch(const Matrix& f, const SaeParams& p) {
  if (static_cast<std::size_t>(f.cols()) != p.d_hid()) {
    throw ShapeError("decode_batch: code width != d_hid");
  }
  Matrix out = f * p.w_dec;
  out.rowwise() += p.b_dec.transpose();
  return out;
}

Matrix reconstruct(const Matrix& x, const SaeParams& p, std::size_t k) {
  return decode_batch(batch_topk(encode_batch(x, p), k), p);
}

double reconstruction_loss(const Matrix& x, const SaeParams& p, std::size_t k) {
  if (x.rows() == 0) throw ShapeError("reconstruction_loss: empty batch");
  return (x - reconstruct(x, p, k)).rowwise().squaredNorm().mean();
}

LossAndGradient loss_and_gradient(const Matrix& x, const SaeParams& p, std::size_t k) {
  if (x.rows() == 0) throw ShapeError("loss_and_gradient: empty batch");
  const Matrix codes = batch_topk(encode_batch(x, p), k);
  const Matrix residual = decode_batch(codes, p) - x;
  const double n = static_cast<double>(x.rows());

  LossAndGradient out;
  out.loss = residual.rowwise().squaredNorm().mean();

  const Matrix d_out = (2.0 / n) * residual;  // dL / dx_hat
  out.grad.w_dec = codes.transpose() * d_out;
  out.grad.b_dec = d_out.colwise().sum().transpose();

  // Kept activations are strictly positive, so the mask also covers ReLU.
  Matrix d_pre = d_out * p.w_dec.transpose();
  d_pre = (codes.array() > 0.0).select(d_pre, 0.0);
  out.grad.w_enc = d_pre.transpose() * x;
  out.grad.b_enc = d_pre.colwise().sum().transpose();
  return out;
}

double train_step(const Matrix& x, SaeParams& p, OptimizerState& opt, const TrainConfig& cfg) {
  auto lg = loss_and_gradient(x, p, cfg.k);
  if (!std::isfinite(lg.loss)) {
    throw TrainError("non-finite loss at step " + std::to_string(opt.step + 1) +
                     " (loss=" + std::to_string(lg.loss) + ")");
  }
  const std::pair<const char*, bool> checks[] = {
      {"w_enc", lg.grad.w_enc.allFinite()},
      {"b_enc", lg.grad.b_enc.allFinite()},
      {"w_dec", lg.grad.w_dec.allFinite()},
      {"b_dec", lg.grad.b_dec.allFinite()},
  };
  for (const auto& [name, ok] : checks) {
    if (!ok) {
      throw TrainError(std::string("non-finite gradient for ") + name + " at step " +
                       std::to_string(opt.step + 1));
    }
  }

  ++opt.step;
  const double t = static_cast<double>(opt.step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  adamw_update<Matrix>(p.w_enc, lg.grad.w_enc, opt.m.w_enc, opt.v.w_enc, cfg, bias1, bias2);
  adamw_update<Vector>(p.b_enc, lg.grad.b_enc, opt.m.b_enc, opt.v.b_enc, cfg, bias1, bias2);
  adamw_update<Matrix>(p.w_dec, lg.grad.w_dec, opt.m.w_dec, opt.v.w_dec, cfg, bias1, bias2);
  adamw_update<Vector>(p.b_dec, lg.grad.b_dec, opt.m.b_dec, opt.v.b_dec, cfg, bias1, bias2);
  return lg.loss;
}

// ---------------------------------------------------------------------------
// Dead latents

std::vector<std::size_t> detect_dead_latents(const DataMatrix& eval, const SaeParams& p,
                                             std::size_t k, std::size_t batch_size) {
  if (eval.rows() == 0) throw ShapeError("detect_dead_latents: empty evaluation set");
  if (batch_size == 0) throw ShapeError("detect_dead_latents: batch_size must be >= 1");
  std::vector<char> alive(p.d_hid(), 0);
  const auto bs = static_cast<Eigen::Index>(batch_size);
  for (Eigen::Index begin = 0; begin < eval.rows(); begin += bs) {
    const Eigen::Index count = std::min(bs, eval.rows() - begin);
    const Matrix codes = batch_topk(encode_batch(block_rows(eval, begin, count), p), k);
    for (Eigen::Index r = 0; r < codes.rows(); ++r) {
      for (Eigen::Index c = 0; c < codes.cols(); ++c) {
        if (codes(r, c) > 0.0) alive[static_cast<std::size_t>(c)] = 1;
      }
    }
  }
  std::vector<std::size_t> dead;
  for (std::size_t j = 0; j < alive.size(); ++j) {
    if (!alive[j]) dead.push_back(j);
  }
  return dead;
}

void reset_dead_latents(std::span<const std::size_t> dead, SaeParams& p, OptimizerState* opt,
                        Rng& rng) {
  for (auto j : dead) {
    if (j >= p.d_hid()) throw ShapeError("reset_dead_latents: latent index out of range");
  }
  for (auto j : dead) {
    const auto r = static_cast<Eigen::Index>(j);
    Vector u = random_unit(p.d_in(), rng);
    p.w_dec.row(r) = u.transpose();
    p.w_enc.row(r) = u.transpose();
    p.b_enc[r] = 0.0;
    if (opt) {
      for (SaeParams* moments : {&opt->m, &opt->v}) {
        moments->w_dec.row(r).setZero();
        moments->w_enc.row(r).setZero();
        moments->b_enc[r] = 0.0;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Training loop

double evaluate_loss(const DataMatrix& data, const SaeParams& p, std::size_t k,
                     std::size_t batch_size) {
  if (data.rows() == 0) throw ShapeError("evaluate_loss: empty data");
  double sum = 0.0;
  const auto bs = static_cast<Eigen::Index>(batch_size);
  for (Eigen::Index begin = 0; begin < data.rows(); begin += bs) {
    const Eigen::Index count = std::min(bs, data.rows() - begin);
    sum += reconstruction_loss(block_rows(data, begin, count), p, k) * static_cast<double>(count);
  }
  return sum / static_cast<double>(data.rows());
}

TrainResult train(const DataMatrix& data, const TrainConfig& cfg) {
  cfg.validate();
  if (static_cast<std::size_t>(data.cols()) != cfg.d_in) {
    throw ShapeError("train: data has " + std::to_string(data.cols()) + " columns, d_in=" +
                     std::to_string(cfg.d_in));
  }
  const std::size_t n = static_cast<std::size_t>(data.rows());
  if (n < cfg.batch_size + 1) {
    throw ShapeError("train: need at least batch_size + 1 = " +
                     std::to_string(cfg.batch_size + 1) + " samples, got " + std::to_string(n));
  }

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  std::size_t n_eval = static_cast<std::size_t>(std::llround(cfg.eval_fraction * n));
  n_eval = std::clamp<std::size_t>(n_eval, 1, cfg.max_eval_samples);
  n_eval = std::min(n_eval, n - cfg.batch_size);
  std::vector<std::size_t> eval_rows(order.end() - static_cast<std::ptrdiff_t>(n_eval), order.end());
  std::sort(eval_rows.begin(), eval_rows.end());
  order.resize(n - n_eval);

  DataMatrix eval(static_cast<Eigen::Index>(n_eval), data.cols());
  for (std::size_t i = 0; i < n_eval; ++i) {
    eval.row(static_cast<Eigen::Index>(i)) = data.row(static_cast<Eigen::Index>(eval_rows[i]));
  }

  TrainResult result;
  result.train_samples = order.size();
  result.eval_samples = n_eval;
  result.params = init_params(cfg.d_in, cfg.d_hid, rng);
  OptimizerState opt = OptimizerState::for_params(result.params);
  result.initial_eval_loss = evaluate_loss(eval, result.params, cfg.k, cfg.batch_size);
  result.step_losses.reserve(cfg.total_steps);

  std::size_t cursor = order.size();  // forces a shuffle before the first batch
  std::vector<std::size_t> batch(cfg.batch_size);
  double loss_since_log = 0.0;
  std::size_t steps_since_log = 0;

  for (std::size_t step = 1; step <= cfg.total_steps; ++step) {
    for (auto& row : batch) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      row = order[cursor++];
    }
    const double loss = train_step(gather_rows(data, batch), result.params, opt, cfg);
    result.step_losses.push_back(loss);
    loss_since_log += loss;
    ++steps_since_log;

    const bool reset_check = cfg.reset_interval_steps > 0 && step % cfg.reset_interval_steps == 0;
    const bool log_point = (cfg.log_interval > 0 && step % cfg.log_interval == 0) ||
                           step == cfg.total_steps || reset_check;
    if (!log_point) continue;

    TrainLogEntry entry;
    entry.step = step;
    entry.loss = loss_since_log / static_cast<double>(steps_since_log);
    auto dead = detect_dead_latents(eval, result.params, cfg.k, cfg.batch_size);
    entry.dead_fraction = static_cast<double>(dead.size()) / static_cast<double>(cfg.d_hid);
    if (reset_check && entry.dead_fraction > cfg.dead_fraction_threshold) {
      reset_dead_latents(dead, result.params, &opt, rng);
      entry.reset = true;
      entry.latents_reset = dead.size();
      ++result.total_resets;
    }
    result.log.push_back(entry);
    loss_since_log = 0.0;
    steps_since_log = 0;
  }
  result.final_eval_loss = evaluate_loss(eval, result.params, cfg.k, cfg.batch_size);
  return result;
}

void write_train_log(const std::filesystem::path& path, std::span<const TrainLogEntry> log) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write training log " + path.string());
  for (const auto& e : log) {
    nlohmann::json j = {{"step", e.step},
                        {"loss", e.loss},
                        {"dead_fraction", e.dead_fraction},
                        {"reset", e.reset},
                        {"latents_reset", e.latents_reset}};
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  ckpt.params.validate();
  std::string buf;
  const auto& p = ckpt.params;
  buf.reserve(40 + 8 * static_cast<std::size_t>(2 * p.w_enc.size() + p.b_enc.size() +
                                                p.b_dec.size()));
  detail::put_le<std::uint64_t>(buf, p.d_in());
  detail::put_le<std::uint64_t>(buf, p.d_hid());
  detail::put_le<std::uint64_t>(buf, ckpt.k);
  detail::put_le<std::uint64_t>(buf, ckpt.step);
  detail::put_le<std::uint64_t>(buf, ckpt.seed);
  auto put = [&](const double* data, Eigen::Index size) {
    for (Eigen::Index i = 0; i < size; ++i) detail::put_le<double>(buf, data[i]);
  };
  put(p.w_enc.data(), p.w_enc.size());
  put(p.b_enc.data(), p.b_enc.size());
  put(p.w_dec.data(), p.w_dec.size());
  put(p.b_dec.data(), p.b_dec.size());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("cannot write checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 40) throw Error("checkpoint too short: " + path.string());
  const auto d_in = detail::get_le<std::uint64_t>(buf.data());
  const auto d_hid = detail::get_le<std::uint64_t>(buf.data() + 8);
  Checkpoint ckpt;
  ckpt.k = detail::get_le<std::uint64_t>(buf.data() + 16);
  ckpt.step = detail::get_le<std::uint64_t>(buf.data() + 24);
  ckpt.seed = detail::get_le<std::uint64_t>(buf.data() + 32);
  const std::uint64_t expected = 40 + 8 * (2 * d_in * d_hid + d_hid + d_in);
  if (d_in == 0 || d_hid == 0 || buf.size() != expected) {
    throw Error("checkpoint size mismatch in " + path.string() + ": " +
                std::to_string(buf.size()) + " bytes, expected " + std::to_string(expected));
  }
  ckpt.params = SaeParams::zeros(d_in, d_hid);
  const char* cur = buf.data() + 40;
  auto get = [&](double* data, Eigen::Index size) {
    for (Eigen::Index i = 0; i < size; ++i, cur += 8) data[i] = detail::get_le<double>(cur);
  };
  get(ckpt.params.w_enc.data(), ckpt.params.w_enc.size());
  get(ckpt.params.b_enc.data(), ckpt.params.b_enc.size());
  get(ckpt.params.w_dec.data(), ckpt.params.w_dec.size());
  get(ckpt.params.b_dec.data(), ckpt.params.b_dec.size());
  ckpt.params.validate();
  return ckpt;
}

// ---------------------------------------------------------------------------
// Featurization

namespace {

void visit_codes(const Matrix& codes, std::span<const std::uint64_t> ids,
                 const ActivationVisitor& visit) {
  for (Eigen::Index r = 0; r < codes.rows(); ++r) {
    for (Eigen::Index c = 0; c < codes.cols(); ++c) {
      const double a = codes(r, c);
      if (a > 0.0) visit(ids[static_cast<std::size_t>(r)], static_cast<std::size_t>(c), a);
    }
  }
}

}  // namespace

void featurize(const DataMatrix& data, std::span<const std::uint64_t> word_ids,
               const SaeParams& p, std::size_t k, std::size_t batch_size,
               const ActivationVisitor& visit) {
  if (word_ids.size() != static_cast<std::size_t>(data.rows())) {
    throw ShapeError("featurize: word_ids and data rows disagree");
  }
  if (batch_size == 0) throw ShapeError("featurize: batch_size must be >= 1");
  const auto bs = static_cast<Eigen::Index>(batch_size);
  for (Eigen::Index begin = 0; begin < data.rows(); begin += bs) {
    const Eigen::Index count = std::min(bs, data.rows() - begin);
    const Matrix codes = batch_topk(encode_batch(block_rows(data, begin, count), p), k);
    visit_codes(codes, word_ids.subspan(static_cast<std::size_t>(begin),
                                        static_cast<std::size_t>(count)),
                visit);
  }
}

std::vector<ActivationList> featurize_lists(const DataMatrix& data,
                                            std::span<const std::uint64_t> word_ids,
                                            const SaeParams& p, std::size_t k,
                                            std::size_t batch_size) {
  std::vector<ActivationList> lists(p.d_hid());
  featurize(data, word_ids, p, k, batch_size,
            [&](std::uint64_t id, std::size_t latent, double a) {
              lists[latent].emplace_back(id, a);
            });
  return lists;
}

void featurize_corpus(const std::filesystem::path& corpus_path, const SaeParams& p,
                      std::size_t k, std::size_t batch_size, double prob_scale,
                      const ActivationVisitor& visit) {
  if (batch_size == 0) throw ShapeError("featurize_corpus: batch_size must be >= 1");
  corpus::CorpusReader reader(corpus_path);
  const std::size_t d_in = reader.header().embedding_dim + 2u;
  if (d_in != p.d_in()) {
    throw ShapeError("featurize_corpus: corpus feature width " + std::to_string(d_in) +
                     " != SAE d_in " + std::to_string(p.d_in()));
  }
  Matrix batch(static_cast<Eigen::Index>(batch_size), static_cast<Eigen::Index>(d_in));
  std::vector<std::uint64_t> ids;
  ids.reserve(batch_size);
  auto flush = [&]() {
    if (ids.empty()) return;
    const auto rows = static_cast<Eigen::Index>(ids.size());
    const Matrix codes = batch_topk(encode_batch(batch.topRows(rows), p), k);
    visit_codes(codes, ids, visit);
    ids.clear();
  };
  while (auto r = reader.next()) {
    const auto v = align::build_feature_vector(*r, prob_scale);
    const auto row = static_cast<Eigen::Index>(ids.size());
    for (std::size_t c = 0; c < d_in; ++c) batch(row, static_cast<Eigen::Index>(c)) = v[c];
    ids.push_back(r->word_id);
    if (ids.size() == batch_size) flush();
  }
  flush();
}

std::pair<DataMatrix, std::vector<std::uint64_t>> load_feature_matrix(
    const std::filesystem::path& corpus_path, double prob_scale) {
  corpus::CorpusReader reader(corpus_path);
  const auto& h = reader.header();
  const auto d_in = static_cast<Eigen::Index>(h.embedding_dim + 2u);
  DataMatrix data(static_cast<Eigen::Index>(h.record_count), d_in);
  std::vector<std::uint64_t> ids;
  ids.reserve(h.record_count);
  while (auto r = reader.next()) {
    const auto v = align::build_feature_vector(*r, prob_scale);
    const auto row = static_cast<Eigen::Index>(ids.size());
    for (Eigen::Index c = 0; c < d_in; ++c) data(row, c) = v[static_cast<std::size_t>(c)];
    ids.push_back(r->word_id);
  }
  return {std::move(data), std::move(ids)};
}

}  // namespace lmslice::sae
