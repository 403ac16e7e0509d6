#include "deltalab/tasks.hpp"

#include <algorithm>

namespace deltalab {

Vocabulary task_vocabulary() { return Vocabulary(tok::kVocabSize, tok::kEos); }

std::string token_name(TokenId t) {
  if (t < 10) return std::string(1, static_cast<char>('0' + t));
  switch (t) {
    case tok::kPlus: return "+";
    case tok::kOpen: return "(";
    case tok::kClose: return ")";
    case tok::kFiller: return "~";
    case tok::kDelimiter: return "=>";
    case tok::kEos: return "<eos>";
    default: return "<" + std::to_string(t) + ">";
  }
}

std::string render_tokens(std::span<const TokenId> tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += token_name(tokens[i]);
  }
  return out;
}

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::ModularAddition: return "modular-addition";
    case TaskKind::Parity: return "parity";
    case TaskKind::CopyReverse: return "copy-reverse";
    case TaskKind::BracketBalance: return "bracket-balance";
  }
  return "?";
}

TaskKind parse_task_kind(std::string_view name) {
  for (auto k : {TaskKind::ModularAddition, TaskKind::Parity, TaskKind::CopyReverse,
                 TaskKind::BracketBalance})
    if (to_string(k) == name) return k;
  throw Error("unknown task kind '" + std::string(name) + "'");
}

namespace {

Tokens to_digits(int value) {
  Tokens d;
  do {
    d.push_back(static_cast<TokenId>(value % 10));
    value /= 10;
  } while (value > 0);
  std::reverse(d.begin(), d.end());
  return d;
}

std::size_t digit_count(int value) { return to_digits(value).size(); }

}  // namespace

void TaskSpec::validate() const {
  if (kind == TaskKind::ModularAddition) {
    if (modulus < 2 || modulus > 100) throw Error("task.modulus must lie in [2, 100]");
  } else if (length < 1 || length > 8) {
    throw Error("task.length must lie in [1, 8]");
  }
}

std::size_t TaskSpec::prompt_length_bound() const {
  if (kind == TaskKind::ModularAddition) return 2 * digit_count(modulus - 1) + 1;
  return static_cast<std::size_t>(length);
}

std::size_t TaskSpec::answer_length_bound() const {
  switch (kind) {
    case TaskKind::ModularAddition: return digit_count(modulus - 1);
    case TaskKind::CopyReverse: return static_cast<std::size_t>(length);
    default: return 1;
  }
}

std::size_t TaskSpec::required_window() const {
  // The last answer token must still see the first prompt token.
  return prompt_length_bound() + answer_length_bound();
}

Tokens TaskSpec::answer_alphabet() const {
  Tokens a;
  switch (kind) {
    case TaskKind::ModularAddition:
    case TaskKind::CopyReverse:
      for (TokenId d = 0; d < 10; ++d) a.push_back(d);
      break;
    case TaskKind::Parity:
    case TaskKind::BracketBalance:
      a = {0, 1};
      break;
  }
  return a;
}

PromptInstance generate_prompt(const TaskSpec& task, Rng& rng) {
  task.validate();
  PromptInstance inst;
  switch (task.kind) {
    case TaskKind::ModularAddition: {
      const int a = static_cast<int>(rng.below(task.modulus));
      const int b = static_cast<int>(rng.below(task.modulus));
      inst.prompt = to_digits(a);
      inst.prompt.push_back(tok::kPlus);
      for (TokenId d : to_digits(b)) inst.prompt.push_back(d);
      inst.answer = to_digits((a + b) % task.modulus);
      break;
    }
    case TaskKind::Parity: {
      TokenId x = 0;
      for (int i = 0; i < task.length; ++i) {
        const auto bit = static_cast<TokenId>(rng.below(2));
        inst.prompt.push_back(bit);
        x ^= bit;
      }
      inst.answer = {x};
      break;
    }
    case TaskKind::CopyReverse: {
      for (int i = 0; i < task.length; ++i) inst.prompt.push_back(static_cast<TokenId>(rng.below(10)));
      inst.answer.assign(inst.prompt.rbegin(), inst.prompt.rend());
      break;
    }
    case TaskKind::BracketBalance: {
      int depth = 0;
      bool ok = true;
      for (int i = 0; i < task.length; ++i) {
        const bool open = rng.below(2) == 0;
        inst.prompt.push_back(open ? tok::kOpen : tok::kClose);
        depth += open ? 1 : -1;
        if (depth < 0) ok = false;
      }
      inst.answer = {static_cast<TokenId>(ok && depth == 0 ? 1 : 0)};
      break;
    }
  }
  return inst;
}

double verify(const TaskSpec&, const PromptInstance& prompt, std::span<const TokenId> response) {
  const auto eos = std::find(response.begin(), response.end(), tok::kEos);
  if (eos == response.end()) return 0.0;  // truncated
  const auto rdelim = std::find(std::make_reverse_iterator(eos), response.rend(), tok::kDelimiter);
  if (rdelim == response.rend()) return 0.0;
  const auto first = rdelim.base();  // one past the delimiter
  return std::equal(first, eos, prompt.answer.begin(), prompt.answer.end()) ? 1.0 : 0.0;
}

Tokens canonical_response(const PromptInstance& prompt) {
  Tokens r{tok::kDelimiter};
  r.insert(r.end(), prompt.answer.begin(), prompt.answer.end());
  r.push_back(tok::kEos);
  return r;
}

}  // namespace deltalab
