#ifndef STSIM_TASK_HPP
#define STSIM_TASK_HPP

#include <coroutine>
#include <exception>
#include <optional>
#include <utility>

namespace stsim
{

template <class T = void>
class Task;

namespace detail
{

struct PromiseBase
{
    std::coroutine_handle<> continuation;
    std::exception_ptr      error;

    std::suspend_always initial_suspend() noexcept
    {
        return {};
    }

    struct FinalAwaiter
    {
        bool await_ready() noexcept
        {
            return false;
        }

        template <class P>
        std::coroutine_handle<> await_suspend(std::coroutine_handle<P> h) noexcept
        {
            if (h.promise().continuation)
            {
                return h.promise().continuation;
            }
            return std::noop_coroutine();
        }

        void await_resume() noexcept {}
    };

    FinalAwaiter final_suspend() noexcept
    {
        return {};
    }

    void unhandled_exception() noexcept
    {
        error = std::current_exception();
    }
};

template <class T>
struct Promise : PromiseBase
{
    std::optional<T> value;

    Task<T> get_return_object() noexcept;

    template <class U>
    void return_value(U&& v)
    {
        value.emplace(std::forward<U>(v));
    }
};

template <>
struct Promise<void> : PromiseBase
{
    Task<void> get_return_object() noexcept;

    void return_void() noexcept {}
};

}  // namespace detail

/// Lazily-started coroutine. Awaiting a Task runs it to completion (possibly
/// across several simulation events) and then resumes the awaiter.
template <class T>
class [[nodiscard]] Task
{
public:
    using promise_type = detail::Promise<T>;
    using handle_type  = std::coroutine_handle<promise_type>;

    Task() = default;
    explicit Task(handle_type h) : handle_(h) {}

    Task(const Task&)            = delete;
    Task& operator=(const Task&) = delete;

    Task(Task&& other) noexcept : handle_(std::exchange(other.handle_, {})) {}
    Task& operator=(Task&& other) noexcept
    {
        if (this != &other)
        {
            destroy();
            handle_ = std::exchange(other.handle_, {});
        }
        return *this;
    }

    ~Task()
    {
        destroy();
    }

    bool valid() const noexcept
    {
        return static_cast<bool>(handle_);
    }

    bool done() const noexcept
    {
        return handle_ && handle_.done();
    }

    handle_type handle() const noexcept
    {
        return handle_;
    }

    /// Rethrows the exception the coroutine exited with, if any.
    void rethrow_if_failed() const
    {
        if (handle_ && handle_.promise().error)
        {
            std::rethrow_exception(handle_.promise().error);
        }
    }

    auto operator co_await() const& noexcept
    {
        struct Awaiter
        {
            handle_type callee;

            bool await_ready() const noexcept
            {
                return !callee || callee.done();
            }

            std::coroutine_handle<> await_suspend(std::coroutine_handle<> caller) noexcept
            {
                callee.promise().continuation = caller;
                return callee;
            }

            T await_resume()
            {
                if (callee.promise().error)
                {
                    std::rethrow_exception(callee.promise().error);
                }
                if constexpr (!std::is_void_v<T>)
                {
                    return std::move(*callee.promise().value);
                }
            }
        };
        return Awaiter{handle_};
    }

private:
    void destroy()
    {
        if (handle_)
        {
            handle_.destroy();
            handle_ = {};
        }
    }

    handle_type handle_;
};

namespace detail
{

template <class T>
Task<T> Promise<T>::get_return_object() noexcept
{
    return Task<T>{std::coroutine_handle<Promise<T>>::from_promise(*this)};
}

inline Task<void> Promise<void>::get_return_object() noexcept
{
    return Task<void>{std::coroutine_handle<Promise<void>>::from_promise(*this)};
}

}  // namespace detail

}  // namespace stsim

#endif
